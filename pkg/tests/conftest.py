import numpy as np
import pytest

from jointslu.config import ModelConfig
from jointslu.corpus import Grammar, generate_corpus, split_corpus
from jointslu.tokenizer import train_unigram

TINY = ModelConfig(feat_dim=4, enc_hidden=3, enc_layers=2, dec_hidden=5, dec_layers=1, att_heads=2,
                   att_depth=3, att_out=4, emb_dim=3, nlu_hidden=3, nlu_layers=2, intent_hidden=4,
                   a2i_hidden=3, a2i_layers=2)


@pytest.fixture(scope="session")
def grammar():
    return Grammar.default()


@pytest.fixture(scope="session")
def small_corpus(grammar):
    return generate_corpus(grammar, 300, 11)


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    return train_unigram([u.transcript for u in small_corpus], 120)


@pytest.fixture(scope="session")
def small_split(small_corpus):
    return split_corpus(small_corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is not None and acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.LINES:
            terminalreporter.write_line(line)
