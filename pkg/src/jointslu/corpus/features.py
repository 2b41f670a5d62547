"""Pseudo-acoustic features.

Each character owns a fixed prototype vector.  An utterance is the sequence of
its characters' prototypes, each held for 2-5 frames with Gaussian noise, then
four consecutive frames are stacked and the rate divided by four, giving the
64-wide inputs of a 16-dim front end.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

FRAME_DIM = 16
STACK = 4
NOISE = 0.1
MIN_DUR, MAX_DUR = 2, 5


@lru_cache(maxsize=None)
def prototype(char: str, dim: int = FRAME_DIM) -> np.ndarray:
    rng = np.random.default_rng([ord(c) for c in char] + [dim, 7919])
    return rng.standard_normal(dim)


def synthesize_features(transcript: str, seed, dim: int = FRAME_DIM, stack: int = STACK) -> np.ndarray:
    """Unnormalized ``(ceil(frames / stack), stack * dim)`` feature matrix."""
    if not transcript:
        raise ValueError("cannot synthesize features for an empty transcript")
    rng = np.random.default_rng(seed)
    durations = rng.integers(MIN_DUR, MAX_DUR + 1, size=len(transcript))
    frames = np.repeat(np.stack([prototype(c, dim) for c in transcript]), durations, axis=0)
    frames = frames + NOISE * rng.standard_normal(frames.shape)
    pad = (-len(frames)) % stack
    if pad:
        frames = np.concatenate([frames, np.repeat(frames[-1:], pad, axis=0)])
    # row k holds raw frames 4k..4k+3, oldest first, ending at the current one
    return frames.reshape(-1, stack * dim)


def normalize(matrices: list[np.ndarray]) -> list[np.ndarray]:
    """Global mean/variance normalization over every frame of a corpus.

    Values are rounded through float32 so the in-memory corpus equals what the
    features file stores."""
    allf = np.concatenate(matrices)
    mu = allf.mean(axis=0)
    sd = allf.std(axis=0)
    sd[sd == 0] = 1.0
    return [((m - mu) / sd).astype(np.float32).astype(np.float64) for m in matrices]
