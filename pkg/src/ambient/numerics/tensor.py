"""Immutable f64 tensors and a tape-recording reverse-mode graph.

A Tensor is a value: contiguous row-major float64, frozen after
construction, finite everywhere (NaN/Inf is rejected at op boundaries).
Ops in `ambient.numerics.ops` attach results to a DiffGraph when any
input is attached; the graph records one tape entry per primitive and
replays the tape strictly in reverse on backward().
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ambient.errors import GraphSpentError, NonFiniteError, ShapeError


class Tensor:
    """Immutable float64 array value, optionally attached to a DiffGraph."""

    __slots__ = ("data", "graph")

    def __init__(self, data, graph: "Optional[DiffGraph]" = None):
        arr = np.array(data, dtype=np.float64, order="C")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "graph", graph)

    @classmethod
    def _wrap(cls, arr: np.ndarray, graph: "Optional[DiffGraph]" = None) -> "Tensor":
        """Adopt a freshly computed array without copying."""
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("op produced NaN or Inf")
        out = object.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(out, "data", arr)
        object.__setattr__(out, "graph", graph)
        return out

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def zeros(shape) -> Tensor:
    return Tensor._wrap(np.zeros(shape, dtype=np.float64))


def as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


class DiffGraph:
    """Ordered tape of primitive ops plus per-parameter gradient slots.

    Parameters are registered with `parameter(tensor, key)`; after
    `backward(loss)` each key maps to its accumulated gradient, with
    zeros for parameters the loss never touched.  A graph is single
    use: backward() a second time raises.
    """

    def __init__(self):
        self._tape: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._params: dict = {}  # key -> Tensor leaf
        self._spent = False

    def parameter(self, tensor: Tensor, key) -> Tensor:
        if key in self._params:
            raise ValueError(f"parameter key registered twice: {key!r}")
        leaf = Tensor._wrap(tensor.data, graph=self)
        self._params[key] = leaf
        return leaf

    def constant(self, tensor: Tensor) -> Tensor:
        """Attach a non-parameter input (no gradient reported)."""
        return Tensor._wrap(as_array(tensor), graph=self)

    def record(self, inputs: Sequence[Tensor], output: Tensor, vjp: Callable) -> None:
        """vjp(grad_out) must return one array-or-None per input."""
        self._tape.append((output, tuple(inputs), vjp))

    @property
    def num_recorded(self) -> int:
        return len(self._tape)

    def backward(self, loss: Tensor) -> dict:
        """Propagate from a scalar loss; returns {param_key: Tensor grad}."""
        if self._spent:
            raise GraphSpentError("backward() already consumed this graph; re-trace first")
        if loss.graph is not self:
            raise ValueError("loss does not belong to this graph")
        if loss.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        self._spent = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for out, inputs, vjp in reversed(self._tape):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None:
                    continue
                if gi.shape != inp.data.shape:
                    raise ShapeError(
                        f"vjp produced shape {gi.shape} for input of shape {inp.data.shape}"
                    )
                acc = grads.get(id(inp))
                grads[id(inp)] = gi if acc is None else acc + gi

        out = {}
        for key, leaf in self._params.items():
            g = grads.get(id(leaf))
            if g is None:
                g = np.zeros_like(leaf.data)
            out[key] = Tensor._wrap(g)
        return out
