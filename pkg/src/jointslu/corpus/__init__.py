from .annotation import (OTHER, AnnotationError, Interpretation, format_annotation,
                         interpretation_from_tags, parse_annotation, project_tags_to_subwords,
                         recover_word_tags)
from .features import synthesize_features
from .grammar import Grammar, GrammarError, Utterance, generate_corpus, split_corpus
from .io import CorpusFormatError, load_corpus, save_corpus

__all__ = [
    "OTHER", "AnnotationError", "CorpusFormatError", "Grammar", "GrammarError", "Interpretation",
    "Utterance", "format_annotation", "generate_corpus", "interpretation_from_tags", "load_corpus",
    "parse_annotation", "project_tags_to_subwords", "recover_word_tags", "save_corpus",
    "split_corpus", "synthesize_features",
]
