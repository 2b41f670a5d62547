# The grammar-driven corpus: annotated utterances, synthetic acoustic features,
# and slot tags moved onto subword pieces and back.
from jointslu.corpus import (Grammar, format_annotation, generate_corpus, project_tags_to_subwords,
                             recover_word_tags, split_corpus)
from jointslu.tokenizer import train_unigram

grammar = Grammar.default()
utts = generate_corpus(grammar, 2500, 7)
train, dev, ev = split_corpus(utts)
print(len(grammar.intents), "intents;", len(train), len(dev), len(ev), "train/dev/eval")

for u in utts[:4]:
    print(format_annotation(u.words, u.tags), "->", u.interpretation())
print("features", utts[0].features.shape)

vocab = train_unigram([u.transcript for u in train], 90)
u = next(x for x in utts if len(x.interpretation().slots) >= 2)
pieces, piece_tags = project_tags_to_subwords(u.words, u.tags, vocab)
for pid, tag in zip(pieces, piece_tags):
    print(f"  {vocab.piece(pid):<12} {tag}")
assert recover_word_tags(pieces, piece_tags, vocab) == list(u.tags)
