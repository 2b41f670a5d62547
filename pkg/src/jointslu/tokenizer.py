"""Unigram language model subword tokenizer.

Every whitespace-delimited word is segmented on its own with the word-begin
marker ``▁`` glued to its front, so pieces never straddle words.  Training
runs EM over the segmentation lattice of each distinct word and prunes the
least useful multi-character pieces between EM rounds.
"""
from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MARKER = "▁"
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
PAD, SOS, EOS, UNK = 0, 1, 2, 3
N_RESERVED = len(RESERVED)
MAX_PIECE_LEN = 8


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Segmentation:
    ids: tuple[int, ...]
    word_begin: tuple[bool, ...]

    def __len__(self) -> int:
        return len(self.ids)


def words_of(text: str) -> list[str]:
    return text.split()


def _logsumexp(xs: Sequence[float]) -> float:
    m = max(xs)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


class SubwordVocab:
    """Pieces with log-probabilities; ids 0-3 are reserved (PAD, SOS, EOS, UNK)."""

    def __init__(self, pieces: Sequence[str], log_probs: Sequence[float]):
        pieces = list(pieces)
        if tuple(pieces[:N_RESERVED]) != RESERVED:
            raise VocabError("vocabulary must start with the reserved pieces")
        if len(set(pieces)) != len(pieces):
            raise VocabError("duplicate pieces in vocabulary")
        self.pieces = pieces
        self.log_probs = np.asarray(log_probs, dtype=np.float64)
        self.index = {p: i for i, p in enumerate(pieces)}
        self.max_len = max((len(p) for p in pieces[N_RESERVED:]), default=1)
        self._cache_viterbi = lru_cache(maxsize=None)(self._viterbi_word)
        self._cache_forward = lru_cache(maxsize=None)(self._forward_word)

    def __len__(self) -> int:
        return len(self.pieces)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SubwordVocab) and self.pieces == other.pieces
                and np.array_equal(self.log_probs, other.log_probs))

    def __hash__(self):
        return id(self)

    def piece(self, i: int) -> str:
        return self.pieces[i]

    @property
    def charset(self) -> set[str]:
        return {p for p in self.pieces[N_RESERVED:] if len(p) == 1}

    # --- lattice -----------------------------------------------------------

    def lattice(self, word: str) -> list[list[tuple[int, int, float]]]:
        """``edges[j]`` lists ``(start, piece_id, log_prob)`` for pieces ending at j."""
        n = len(word)
        edges: list[list[tuple[int, int, float]]] = [[] for _ in range(n + 1)]
        for j in range(1, n + 1):
            for i in range(max(0, j - self.max_len), j):
                pid = self.index.get(word[i:j])
                if pid is not None and pid >= N_RESERVED:
                    edges[j].append((i, pid, float(self.log_probs[pid])))
        return edges

    def _viterbi_word(self, word: str) -> tuple[tuple[int, ...], float]:
        edges = self.lattice(word)
        n = len(word)
        best: list[tuple[float, int, tuple[int, ...]] | None] = [None] * (n + 1)
        best[0] = (0.0, 0, ())
        for j in range(1, n + 1):
            cur = None
            for i, pid, lp in edges[j]:
                prev = best[i]
                if prev is None:
                    continue
                cand = (prev[0] + lp, prev[1] + 1, prev[2] + (pid,))
                if cur is None or _better(cand, cur):
                    cur = cand
            best[j] = cur
        if best[n] is None:
            raise VocabError(f"no segmentation for {word!r}: character missing from vocabulary")
        return best[n][2], best[n][0]

    def _forward_word(self, word: str, alpha: float):
        edges = self.lattice(word)
        fwd = [-math.inf] * (len(word) + 1)
        fwd[0] = 0.0
        for j in range(1, len(word) + 1):
            terms = [fwd[i] + alpha * lp for i, _, lp in edges[j]]
            if terms:
                fwd[j] = _logsumexp(terms)
        if fwd[-1] == -math.inf:
            raise VocabError(f"no segmentation for {word!r}: character missing from vocabulary")
        return edges, fwd

    def score(self, ids: Iterable[int]) -> float:
        return float(sum(self.log_probs[i] for i in ids))

    # --- persistence -------------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{p}\t{0.0!r}" for p in RESERVED]
        lines += [f"{p}\t{float(lp)!r}" for p, lp in zip(self.pieces[N_RESERVED:], self.log_probs[N_RESERVED:])]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SubwordVocab":
        pieces, lps = [], []
        for n, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            piece, sep, lp = line.rpartition("\t")
            if not sep or not piece:
                raise VocabError(f"line {n}: expected 'piece<TAB>log_prob'")
            pieces.append(piece)
            lps.append(float(lp))
        return cls(pieces, lps)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SubwordVocab":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _better(a, b) -> bool:
    """Higher score, then fewer pieces, then lexicographically smaller ids."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


# --- segmentation --------------------------------------------------------------

def _assemble(per_word: list[tuple[int, ...]]) -> Segmentation:
    ids: list[int] = []
    begins: list[bool] = []
    for w in per_word:
        ids.extend(w)
        begins.extend([True] + [False] * (len(w) - 1))
    return Segmentation(tuple(ids), tuple(begins))


def segment_viterbi(text: str, vocab: SubwordVocab) -> Segmentation:
    """Most probable segmentation of each word, deterministic tie-breaking."""
    return _assemble([vocab._cache_viterbi(MARKER + w)[0] for w in words_of(text)])


def segment_sample(text: str, vocab: SubwordVocab, alpha: float,
                   rng_seed: int | np.random.Generator) -> Segmentation:
    """Draw a segmentation with probability proportional to ``exp(alpha * score)``
    by forward filtering and backward sampling on each word's lattice."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    out = []
    for w in words_of(text):
        edges, fwd = vocab._cache_forward(MARKER + w, float(alpha))
        j = len(w) + 1
        rev: list[int] = []
        while j > 0:
            cands = edges[j]
            weights = np.array([math.exp(fwd[i] + alpha * lp - fwd[j]) for i, _, lp in cands])
            k = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
            k = min(k, len(cands) - 1)
            i, pid, _ = cands[k]
            rev.append(pid)
            j = i
        out.append(tuple(reversed(rev)))
    return _assemble(out)


def encode(text: str, vocab: SubwordVocab) -> list[int]:
    return list(segment_viterbi(text, vocab).ids)


def word_begins(ids: Sequence[int], vocab: SubwordVocab) -> list[bool]:
    """A piece starts a word if it carries the marker; the first piece always does."""
    return [k == 0 or vocab.pieces[i].startswith(MARKER) for k, i in enumerate(ids)]


def detokenize(segmentation: Segmentation | Sequence[int], vocab: SubwordVocab) -> str:
    ids = segmentation.ids if isinstance(segmentation, Segmentation) else segmentation
    parts = []
    for i in ids:
        if not N_RESERVED <= i < len(vocab):
            raise VocabError(f"piece id {i} is not a text piece")
        parts.append(vocab.pieces[i])
    return "".join(parts).replace(MARKER, " ").strip(" ")


# --- training ------------------------------------------------------------------

@dataclass
class TrainTrace:
    """Corpus log-likelihood per EM iteration, grouped by pruning round."""
    rounds: list[list[float]]


def _word_counts(corpus: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for text in corpus:
        for w in words_of(text):
            counts[MARKER + w] += 1
    return counts


def _expected_counts(words: list[tuple[str, int]], vocab: SubwordVocab) -> tuple[np.ndarray, float]:
    counts = np.zeros(len(vocab))
    loglik = 0.0
    for w, freq in words:
        edges = vocab.lattice(w)
        n = len(w)
        fwd = [-math.inf] * (n + 1)
        fwd[0] = 0.0
        for j in range(1, n + 1):
            if edges[j]:
                fwd[j] = _logsumexp([fwd[i] + lp for i, _, lp in edges[j]])
        bwd = [-math.inf] * (n + 1)
        bwd[n] = 0.0
        for j in range(n, 0, -1):
            for i, _, lp in edges[j]:
                bwd[i] = _logsumexp([bwd[i], bwd[j] + lp])
        z = fwd[n]
        loglik += freq * z
        for j in range(1, n + 1):
            for i, pid, lp in edges[j]:
                counts[pid] += freq * math.exp(fwd[i] + lp + bwd[j] - z)
    return counts, loglik


def _normalized(pieces: list[str], weights: dict[str, float]) -> SubwordVocab:
    # floor keeps underflowed expected counts finite in log space
    w = [max(weights[p], 1e-300) for p in pieces]
    total = math.fsum(w)
    lps = [0.0] * N_RESERVED + [math.log(x / total) for x in w]
    return SubwordVocab(list(RESERVED) + pieces, lps)


def train_unigram(corpus: Sequence[str], target_vocab_size: int, *, em_iters: int = 4,
                  min_freq: int = 2, prune_fraction: float = 0.2,
                  trace: TrainTrace | None = None) -> SubwordVocab:
    """Fit a unigram subword vocabulary of exactly ``target_vocab_size`` ids
    (reserved ids included) or fewer when the seed inventory is smaller."""
    counts = _word_counts(corpus)
    if not counts:
        raise VocabError("cannot train a tokenizer on an empty corpus")
    chars = sorted({c for w in counts for c in w})
    if target_vocab_size < len(chars) + N_RESERVED:
        raise VocabError(f"target size {target_vocab_size} below character inventory "
                         f"{len(chars)} + {N_RESERVED} reserved")
    sub: Counter = Counter()
    for w, f in counts.items():
        for i in range(len(w)):
            for j in range(i + 2, min(len(w), i + MAX_PIECE_LEN) + 1):
                sub[w[i:j]] += f
    char_freq: Counter = Counter()
    for w, f in counts.items():
        for c in w:
            char_freq[c] += f
    weights = {c: float(char_freq[c]) for c in chars}
    weights.update({s: float(f) for s, f in sub.items() if f >= min_freq})
    pieces = sorted(weights)
    words = sorted(counts.items())
    target = target_vocab_size - N_RESERVED
    rounds: list[list[float]] = []

    while True:
        vocab = _normalized(pieces, weights)
        history = []
        for _ in range(em_iters):
            expected, ll = _expected_counts(words, vocab)
            history.append(ll)
            weights = {p: float(expected[k + N_RESERVED]) for k, p in enumerate(pieces)}
            vocab = _normalized(pieces, weights)
        _, ll = _expected_counts(words, vocab)
        history.append(ll)
        rounds.append(history)
        excess = len(pieces) - target
        if excess <= 0:
            break
        multi = [p for p in pieces if len(p) > 1]
        k = min(excess, max(1, int(prune_fraction * len(multi))))
        utility = {}
        for p in multi:
            pid = vocab.index[p]
            alt = _best_without(p, pid, vocab)
            utility[p] = weights[p] * (float(vocab.log_probs[pid]) - alt)
        drop = set(sorted(multi, key=lambda p: (utility[p], p))[:k])
        pieces = [p for p in pieces if p not in drop]
    if trace is not None:
        trace.rounds = rounds
    return vocab


def _best_without(piece: str, pid: int, vocab: SubwordVocab) -> float:
    """Best score of ``piece``'s text when the piece itself is unavailable."""
    edges = vocab.lattice(piece)
    n = len(piece)
    best = [-math.inf] * (n + 1)
    best[0] = 0.0
    for j in range(1, n + 1):
        for i, q, lp in edges[j]:
            if q != pid and best[i] + lp > best[j]:
                best[j] = best[i] + lp
    return best[n]
