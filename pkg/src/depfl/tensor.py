"""Small reverse-mode differentiation kernel over 2-D float64 arrays.

Every op is a method on :class:`Tape`; it computes the forward value, records
a vector-Jacobian closure, and returns a new :class:`Tensor`. ``backward``
walks the records in reverse and accumulates adjoints.

Broadcasting is limited to adding a ``1 x cols`` row vector to a matrix.
"""
from __future__ import annotations

import warnings
from typing import Callable, Iterable, Mapping

import numpy as np

from .assembly import NormalizedAdjacency

LN_EPS = 1e-5


class ShapeMismatch(ValueError):
    pass


class NonFiniteResult(FloatingPointError):
    pass


class DisconnectedParameter(UserWarning):
    """A requested parameter received no gradient (its gradient is returned as zeros)."""


class Tensor:
    __slots__ = ("data", "name")

    def __init__(self, data, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeMismatch(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} {self.shape[0]}x{self.shape[1]}>"


VJP = Callable[[np.ndarray], tuple]


class Tape:
    def __init__(self, check_finite: bool = True):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], VJP]] = []
        self.check_finite = check_finite

    def _emit(self, value: np.ndarray, inputs: tuple[Tensor, ...], vjp: VJP, op: str) -> Tensor:
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteResult(f"{op} produced a non-finite value")
        out = Tensor(value)
        self.records.append((out, inputs, vjp))
        return out

    # -- linear algebra ---------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        A, B = a.data, b.data
        return self._emit(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g), "matmul")

    def spmm(self, adj: NormalizedAdjacency, x: Tensor) -> Tensor:
        """Sparse adjacency times dense matrix; the adjacency is a constant."""
        if adj.n != x.shape[0]:
            raise ShapeMismatch(f"adjacency of size {adj.n} vs {x.shape[0]} rows")
        M = adj.csr
        return self._emit(M @ x.data, (x,), lambda g: (M.T @ g,), "spmm")

    def transpose(self, x: Tensor) -> Tensor:
        return self._emit(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")

    # -- elementwise ----------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape == b.shape:
            return self._emit(a.data + b.data, (a, b), lambda g: (g, g), "add")
        if b.shape == (1, a.shape[1]):
            return self._emit(a.data + b.data, (a, b),
                              lambda g: (g, g.sum(axis=0, keepdims=True)), "add")
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def hadamard(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatch(f"hadamard {a.shape} * {b.shape}")
        A, B = a.data, b.data
        return self._emit(A * B, (a, b), lambda g: (g * B, g * A), "hadamard")

    def scale(self, x: Tensor, c: float) -> Tensor:
        return self._emit(x.data * c, (x,), lambda g: (g * c,), "scale")

    def sigmoid(self, x: Tensor) -> Tensor:
        s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
        return self._emit(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")

    def tanh(self, x: Tensor) -> Tensor:
        t = np.tanh(x.data)
        return self._emit(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")

    def log(self, x: Tensor) -> Tensor:
        X = x.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(X)
        return self._emit(out, (x,), lambda g: (g / X,), "log")

    # -- row-wise -------------------------------------------------------------

    def softmax_rows(self, x: Tensor) -> Tensor:
        z = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)

        def vjp(g):
            return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

        return self._emit(p, (x,), vjp, "softmax_rows")

    def layer_norm(self, x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
        n = x.shape[1]
        if gamma.shape != (1, n) or beta.shape != (1, n):
            raise ShapeMismatch(f"layer_norm scale/shift must be 1x{n}")
        X = x.data
        xc = X - X.mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
        xhat = xc * inv
        G = gamma.data

        def vjp(g):
            dxhat = g * G
            dx = (inv / n) * (n * dxhat - dxhat.sum(axis=1, keepdims=True)
                              - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
            return dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

        return self._emit(xhat * G + beta.data, (x, gamma, beta), vjp, "layer_norm")

    # -- reductions and indexing ---------------------------------------------

    def sum(self, x: Tensor) -> Tensor:
        shape = x.shape
        return self._emit(np.array([[x.data.sum()]]), (x,),
                          lambda g: (np.full(shape, g[0, 0]),), "sum")

    def take_rows(self, x: Tensor, idx: np.ndarray) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        shape = x.shape

        def vjp(g):
            gx = np.zeros(shape)
            np.add.at(gx, idx, g)
            return (gx,)

        return self._emit(x.data[idx], (x,), vjp, "take_rows")

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"concat_cols {a.shape} | {b.shape}")
        k = a.shape[1]
        return self._emit(np.hstack([a.data, b.data]), (a, b),
                          lambda g: (g[:, :k], g[:, k:]), "concat_cols")

    def concat_rows(self, parts: Iterable[Tensor]) -> Tensor:
        parts = tuple(parts)
        cols = {p.shape[1] for p in parts}
        if len(cols) != 1:
            raise ShapeMismatch(f"concat_rows over column counts {sorted(cols)}")
        cuts = np.cumsum([p.shape[0] for p in parts])[:-1]
        return self._emit(np.vstack([p.data for p in parts]), parts,
                          lambda g: tuple(np.split(g, cuts, axis=0)), "concat_rows")


def backward(tape: Tape, loss: Tensor, params: Mapping[str, Tensor],
             warn_disconnected: bool = True) -> dict[str, np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to each tensor in ``params``."""
    if loss.shape != (1, 1):
        raise ShapeMismatch(f"loss must be 1x1, got {loss.shape}")
    adj: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    on_tape = False
    for out, inputs, vjp in reversed(tape.records):
        if out is loss:
            on_tape = True
        g = adj.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, vjp(g)):
            key = id(inp)
            if key in adj:
                adj[key] = adj[key] + gi
            else:
                adj[key] = gi
    if not on_tape:
        raise ValueError("loss was not produced on this tape")
    grads = {}
    for name, p in params.items():
        g = adj.get(id(p))
        if g is None:
            if warn_disconnected:
                warnings.warn(f"parameter {name!r} is disconnected from the loss",
                              DisconnectedParameter, stacklevel=2)
            g = np.zeros(p.shape)
        grads[name] = np.asarray(g, dtype=np.float64).reshape(p.shape)
    return grads
