"""Minimal reverse-mode automatic differentiation on float64 numpy arrays."""
from . import ops
from .checkpoint import CheckpointError
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .ops import cross_entropy
from .optim import Adam, clip_grad_norm, global_norm
from .tensor import DTYPE, Graph, Parameter, Params, ShapeError, Tensor

__all__ = [
    "Adam", "CheckpointError", "DTYPE", "Graph", "Parameter", "Params", "ShapeError",
    "Tensor", "clip_grad_norm", "cross_entropy", "global_norm", "load_checkpoint",
    "ops", "save_checkpoint",
]
