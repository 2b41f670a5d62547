# Unigram subword vocabulary: EM training with pruning, Viterbi segmentation,
# and the sampled segmentations used for subword regularization.
import numpy as np

from jointslu.corpus import Grammar, generate_corpus
from jointslu.tokenizer import TrainTrace, detokenize, segment_sample, segment_viterbi, train_unigram

utts = generate_corpus(Grammar.default(), 800, 7)
trace = TrainTrace([])
vocab = train_unigram([u.transcript for u in utts], 90, trace=trace)
print(len(vocab), "pieces; EM log-likelihood by round:")
for history in trace.rounds[:3]:
    print("  ", [round(v, 1) for v in history])

text = "switch on the air conditioner in the garage"
best = segment_viterbi(text, vocab)
print("viterbi ", [vocab.piece(i) for i in best.ids], round(vocab.score(best.ids), 2))

rng = np.random.default_rng(1)
for alpha in (0.1, 0.5, 5.0):
    seg = segment_sample(text, vocab, alpha, rng)
    print(f"alpha={alpha:<4}", [vocab.piece(i) for i in seg.ids])
    assert detokenize(seg, vocab) == text
