"""Direct audio-to-intent classifier: unidirectional LSTM stack over frames,
mean pooling, and the shared feed-forward intent head."""
from __future__ import annotations

import numpy as np

from ..autodiff import Graph, Params, Tensor, ops
from ..config import ModelConfig
from .las import pad_features
from .layers import IntentHead, StackedLSTM


class AudioToIntent:
    def __init__(self, cfg: ModelConfig, n_intents: int, rng: np.random.Generator,
                 params: Params | None = None, prefix: str = "a2i"):
        self.cfg = cfg
        self.params = params if params is not None else Params()
        # a2i_layers=0 leaves the frames untouched, which tests use to isolate pooling
        self.encoder = StackedLSTM(self.params, f"{prefix}.enc", cfg.feat_dim, cfg.a2i_hidden,
                                   cfg.a2i_layers, rng, bidirectional=False)
        self.head = IntentHead(self.params, f"{prefix}.intent", self.encoder.d_out,
                               cfg.intent_hidden, n_intents, rng)

    def forward(self, g: Graph, feats: list[np.ndarray], trainable: bool = True) -> Tensor:
        for f in feats:
            if f.ndim != 2 or len(f) == 0:
                raise ValueError("audio-to-intent needs at least one frame per utterance")
        x, lengths = pad_features(feats)
        ys = self.encoder.run(g, g.constant(x), lengths, trainable)
        return self.head(g, ys, lengths, trainable)


def audio_to_intent_forward(model: AudioToIntent, features: np.ndarray) -> np.ndarray:
    """Intent logits for one ``(T, D)`` feature matrix."""
    g = Graph(grad_enabled=False)
    return model.forward(g, [np.asarray(features, dtype=float)], trainable=False).data[0]


def a2i_loss(g: Graph, model: AudioToIntent, feats: list[np.ndarray], intents: np.ndarray,
             smoothing: float = 0.0) -> Tensor:
    logits = model.forward(g, feats)
    B = len(feats)
    return ops.cross_entropy(logits, intents, smoothing, np.full(B, 1.0 / B))
