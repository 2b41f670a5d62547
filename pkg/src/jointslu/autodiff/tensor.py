"""Dense float64 tensors recorded on a dynamic tape.

A :class:`Graph` is built fresh for every example or batch.  Operations append
their output node to ``graph.nodes`` in execution order, so the insertion
order is already a topological order and :meth:`Graph.backward` only has to
walk the list in reverse.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to a primitive's rule."""


class Parameter:
    """A named trainable array with an accumulated gradient slot."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class SliceGrad:
    """Gradient that is zero outside ``index``; accumulated in place."""

    __slots__ = ("index", "value", "fancy")

    def __init__(self, index, value: np.ndarray, fancy: bool = False):
        self.index = index
        self.value = value
        self.fancy = fancy


class Tensor:
    __slots__ = ("data", "grad", "graph", "parents", "backward_fn", "requires_grad", "param", "owned")

    def __init__(self, data, graph: "Graph", parents=(), backward_fn=None,
                 requires_grad=False, param: Parameter | None = None):
        self.data = data
        self.graph = graph
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.param = param
        self.grad = None
        self.owned = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the functions live in ``ops``
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other, self.graph), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


class Graph:
    """Append-only tape of operations plus the parameter leaves they read.

    ``grad_enabled=False`` builds nothing: every op returns a plain value
    holder, which is what inference and frozen sub-networks use.
    """

    def __init__(self, grad_enabled: bool = True):
        self.grad_enabled = grad_enabled
        self.nodes: list[Tensor] = []
        self.leaves: list[Tensor] = []
        self._leaf_by_param: dict[int, Tensor] = {}

    def constant(self, value) -> Tensor:
        return Tensor(np.asarray(value, dtype=DTYPE), self)

    def param(self, parameter: Parameter, trainable: bool = True) -> Tensor:
        """Leaf bound to ``parameter``; gradients land in ``parameter.grad``."""
        if not (trainable and self.grad_enabled):
            return Tensor(parameter.value, self)
        leaf = self._leaf_by_param.get(id(parameter))
        if leaf is None:
            leaf = Tensor(parameter.value, self, requires_grad=True, param=parameter)
            self._leaf_by_param[id(parameter)] = leaf
            self.leaves.append(leaf)
        return leaf

    def record(self, data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
        if self.grad_enabled and any(p.requires_grad for p in parents):
            out = Tensor(data, self, tuple(parents), backward_fn, requires_grad=True)
            self.nodes.append(out)
            return out
        return Tensor(data, self)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(parameter) into every bound parameter's ``grad``.

        Node gradients are reset on entry, parameter gradients are not, so two
        calls on the same graph accumulate twice the gradient.
        """
        if loss.data.ndim != 0:
            raise ShapeError(f"backward: loss must be a scalar, got shape {loss.data.shape}")
        if loss.graph is not self:
            raise ValueError("backward: loss was not produced by this graph")
        for node in self.nodes:
            node.grad = None
            node.owned = False
        for leaf in self.leaves:
            leaf.grad = None
            leaf.owned = False
        if not loss.requires_grad:
            return
        loss.grad = np.ones((), dtype=DTYPE)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                _accumulate(parent, pg)
        for leaf in self.leaves:
            if leaf.grad is not None:
                leaf.param.grad += leaf.grad


def _accumulate(t: Tensor, pg) -> None:
    if isinstance(pg, SliceGrad):
        if t.grad is None:
            t.grad = np.zeros(t.data.shape, dtype=DTYPE)
            t.owned = True
        elif not t.owned:
            t.grad = np.array(t.grad, dtype=DTYPE)
            t.owned = True
        if pg.fancy:
            np.add.at(t.grad, pg.index, pg.value)
        else:
            t.grad[pg.index] += pg.value
    elif t.grad is None:
        t.grad = pg
        t.owned = False
    elif t.owned and t.grad.shape == np.shape(pg):
        t.grad += pg
    else:
        t.grad = t.grad + pg
        t.owned = True


class Params:
    """Ordered registry of named parameters belonging to one model."""

    def __init__(self, items: Iterable[Parameter] = ()):
        self._items: dict[str, Parameter] = {}
        for p in items:
            self.add(p)

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._items:
            raise KeyError(f"duplicate parameter {param.name!r}")
        self._items[param.name] = param
        return param

    def new(self, name: str, value: np.ndarray) -> Parameter:
        return self.add(Parameter(name, value))

    def __getitem__(self, name: str) -> Parameter:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self) -> int:
        return len(self._items)

    def names(self) -> list[str]:
        return list(self._items)

    def subset(self, prefix: str) -> list[Parameter]:
        return [p for n, p in self._items.items() if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for p in self._items.values():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        """Copies of every value, keyed by name."""
        return {n: p.value.copy() for n, p in self._items.items()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = [n for n in self._items if n not in state]
        if strict and (missing or set(state) - set(self._items)):
            extra = sorted(set(state) - set(self._items))
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for n, p in self._items.items():
            if n not in state:
                continue
            value = np.asarray(state[n], dtype=DTYPE)
            if value.shape != p.value.shape:
                raise ShapeError(f"{n}: expected shape {p.value.shape}, got {value.shape}")
            p.value[...] = value
