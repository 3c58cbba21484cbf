"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op executed while a `Tape` is active appends an (output, pullback)
record in execution order. `backward` replays the records in reverse;
execution order is already a topological order of the graph, so a single
reverse sweep settles every adjoint exactly once.

A tape and the tensors recorded on it belong to one thread. Distinct
threads may each run their own tape, but nothing here may be shared
between threads mid-flight.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ShapeError

Pullback = Callable[[np.ndarray], None]

_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "tapes", None)
    if stack is None:
        stack = []
        _LOCAL.tapes = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense row-major float64 array, optionally carrying an adjoint.

    `grad` is populated by `backward` and has the same shape as `data`.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(float(other), self)

    def __rmul__(self, other):
        return scale(float(other), self)

    def __neg__(self) -> "Tensor":
        return scale(-1.0, self)

    def sum(self) -> "Tensor":
        return tsum(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops, used as a context manager."""

    __slots__ = ("records",)

    def __init__(self):
        self.records: list[tuple[Tensor, Pullback]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> bool:
        popped = _tape_stack().pop()
        if popped is not self:
            raise ContractError("tapes exited out of order")
        return False

    def __len__(self) -> int:
        return len(self.records)


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape))


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def _emit(out_data: np.ndarray, inputs: Sequence[Tensor], pull: Pullback) -> Tensor:
    out = Tensor(out_data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape = active_tape()
        if tape is not None:
            tape.records.append((out, pull))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = Tensor(np.zeros_like(t.data))
    t.grad.data += g


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} needs matching shapes, got {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def pull(g: np.ndarray) -> None:
        _accum(a, g)
        _accum(b, g)

    return _emit(a.data + b.data, (a, b), pull)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def pull(g: np.ndarray) -> None:
        _accum(a, g)
        _accum(b, -g)

    return _emit(a.data - b.data, (a, b), pull)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "hadamard")

    def pull(g: np.ndarray) -> None:
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _emit(a.data * b.data, (a, b), pull)


def scale(c: float, a: Tensor) -> Tensor:
    """Scalar times tensor; the scalar is a plain number, never a Tensor."""
    if isinstance(c, Tensor):
        raise ContractError("scale takes a plain scalar; use hadamard for tensor-tensor products")
    c = float(c)

    def pull(g: np.ndarray) -> None:
        _accum(a, c * g)

    return _emit(c * a.data, (a,), pull)


def one_minus(a: Tensor) -> Tensor:
    return sub(Tensor(np.ones_like(a.data)), a)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def pull(g: np.ndarray) -> None:
        _accum(a, g * out * (1.0 - out))

    return _emit(out, (a,), pull)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def pull(g: np.ndarray) -> None:
        _accum(a, g * (1.0 - out * out))

    return _emit(out, (a,), pull)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def pull(g: np.ndarray) -> None:
        _accum(a, g * out)

    return _emit(out, (a,), pull)


def log(a: Tensor) -> Tensor:
    def pull(g: np.ndarray) -> None:
        with np.errstate(invalid="ignore", divide="ignore"):
            _accum(a, g / a.data)

    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)
    return _emit(out, (a,), pull)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec needs (m,n) @ (n,), got {w.shape} @ {x.shape}")

    def pull(g: np.ndarray) -> None:
        _accum(w, np.outer(g, x.data))
        _accum(x, w.data.T @ g)

    return _emit(w.data @ x.data, (w, x), pull)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs (m,n) @ (n,k), got {a.shape} @ {b.shape}")

    def pull(g: np.ndarray) -> None:
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _emit(a.data @ b.data, (a, b), pull)


def addcol(m: Tensor, v: Tensor) -> Tensor:
    """Add a column vector to every column of a matrix."""
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[0] != v.shape[0]:
        raise ShapeError(f"addcol needs (h,k) + (h,), got {m.shape} + {v.shape}")

    def pull(g: np.ndarray) -> None:
        _accum(m, g)
        _accum(v, g.sum(axis=1))

    return _emit(m.data + v.data[:, None], (m, v), pull)


def colscale(m: Tensor, w: np.ndarray) -> Tensor:
    """Multiply column j of `m` by the constant weight w[j].

    The weights are plain numbers (no gradient flows into them).
    """
    w = np.asarray(w, dtype=np.float64)
    if m.data.ndim != 2 or w.ndim != 1 or w.shape[0] != m.shape[1]:
        raise ShapeError(f"colscale needs (h,k) with k weights, got {m.shape} and {w.shape}")

    def pull(g: np.ndarray) -> None:
        _accum(m, g * w[None, :])

    return _emit(m.data * w[None, :], (m,), pull)


def colsum(m: Tensor) -> Tensor:
    """Sum each column of a matrix down to a length-k vector."""
    if m.data.ndim != 2:
        raise ShapeError(f"colsum needs a matrix, got shape {m.shape}")

    def pull(g: np.ndarray) -> None:
        _accum(m, np.broadcast_to(g, m.shape))

    return _emit(m.data.sum(axis=0), (m,), pull)


def tsum(a: Tensor) -> Tensor:
    """Sum all elements down to a scalar."""

    def pull(g: np.ndarray) -> None:
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _emit(np.asarray(a.data.sum()), (a,), pull)


def pick(x: Tensor, i: int) -> Tensor:
    """Select element i of a vector as a scalar."""
    if x.data.ndim != 1:
        raise ShapeError(f"pick needs a vector, got shape {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise ContractError(f"pick index {i} out of range for length {x.shape[0]}")

    def pull(g: np.ndarray) -> None:
        buf = np.zeros_like(x.data)
        buf[i] = g
        _accum(x, buf)

    return _emit(np.asarray(x.data[i]), (x,), pull)


def stack_cols(xs: Sequence[Tensor]) -> Tensor:
    """Stack k equal-length vectors into an (h, k) matrix, one per column."""
    if not xs:
        raise ContractError("stack_cols needs at least one vector")
    for t in xs:
        if t.data.ndim != 1 or t.shape != xs[0].shape:
            raise ShapeError(f"stack_cols needs equal-length vectors, got {t.shape} vs {xs[0].shape}")
    xs = list(xs)

    def pull(g: np.ndarray) -> None:
        for j, t in enumerate(xs):
            _accum(t, g[:, j])

    return _emit(np.stack([t.data for t in xs], axis=1), xs, pull)


def col(m: Tensor, j: int) -> Tensor:
    """Extract column j of a matrix as a vector."""
    if m.data.ndim != 2:
        raise ShapeError(f"col needs a matrix, got shape {m.shape}")
    if not 0 <= j < m.shape[1]:
        raise ContractError(f"column {j} out of range for {m.shape[1]} columns")

    def pull(g: np.ndarray) -> None:
        buf = np.zeros_like(m.data)
        buf[:, j] = g
        _accum(m, buf)

    return _emit(m.data[:, j].copy(), (m,), pull)


def cols(m: Tensor, j0: int, j1: int) -> Tensor:
    """Extract the column slice [j0, j1) of a matrix."""
    if m.data.ndim != 2:
        raise ShapeError(f"cols needs a matrix, got shape {m.shape}")
    if not (0 <= j0 <= j1 <= m.shape[1]):
        raise ContractError(f"column slice [{j0}, {j1}) out of range for {m.shape[1]} columns")

    def pull(g: np.ndarray) -> None:
        buf = np.zeros_like(m.data)
        buf[:, j0:j1] = g
        _accum(m, buf)

    return _emit(m.data[:, j0:j1].copy(), (m,), pull)


def hconcat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate matrices side by side."""
    if not parts:
        raise ContractError("hconcat needs at least one part")
    rows = parts[0].shape[0]
    for t in parts:
        if t.data.ndim != 2 or t.shape[0] != rows:
            raise ShapeError(f"hconcat needs matching row counts, got {t.shape} vs {parts[0].shape}")
    parts = list(parts)
    widths = [t.shape[1] for t in parts]

    def pull(g: np.ndarray) -> None:
        off = 0
        for t, w in zip(parts, widths):
            _accum(t, g[:, off:off + w])
            off += w

    return _emit(np.concatenate([t.data for t in parts], axis=1), parts, pull)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every tensor the loss depends on.

    The loss must be a scalar recorded on `tape`. Grads accumulate; call
    `zero_grads` between optimization steps.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.records:
        raise ContractError("backward on an empty tape")
    loss.grad = Tensor(np.ones(()))
    for out, pull in reversed(tape.records):
        if out.grad is not None:
            pull(out.grad.data)


def zero_grads(params) -> None:
    values = params.values() if isinstance(params, Mapping) else params
    for t in values:
        t.grad = None


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5) -> float:
    """Compare tape gradients of f() against central differences.

    `f` must rebuild its graph from the live tensors in `params` on every
    call and return a scalar. Returns the worst relative error
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|) over all
    coordinates; a non-finite f at a probe point scores inf.
    """
    if isinstance(params, Mapping):
        items = list(params.values())
    else:
        items = list(params)
    zero_grads(items)
    with Tape() as tape:
        loss = f()
    backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.data.copy()
                for t in items]

    worst = 0.0
    for t, an in zip(items, analytic):
        flat = t.data.ravel()
        an_flat = an.ravel()
        for i in range(flat.size):
            kept = flat[i]
            flat[i] = kept + eps
            up = float(f().data)
            flat[i] = kept - eps
            down = float(f().data)
            flat[i] = kept
            if not (math.isfinite(up) and math.isfinite(down)):
                worst = math.inf
                continue
            numeric = (up - down) / (2.0 * eps)
            rel = abs(an_flat[i] - numeric) / max(1e-8, abs(an_flat[i]) + abs(numeric))
            worst = max(worst, rel)
    return worst
