"""Gated recurrent cell, its continuous-time field, and the affine layers.

The same nine weight tensors serve three uses: the classic discrete step,
the relaxation field that drives hidden states between observations, and
the gated coupling terms of the depth models. Throughout, `w_*` matrices
multiply the input-like argument of a gate and `u_*` matrices the
state-like argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ad import (Tensor, add, addcol, hadamard, matmul, matvec, one_minus,
                 sigmoid, sub, tanh)
from .errors import ShapeError


@dataclass
class GruParams:
    """Weights of one gated recurrent cell of width `hidden`."""

    hidden: int
    w_reset: Tensor
    u_reset: Tensor
    b_reset: Tensor
    w_update: Tensor
    u_update: Tensor
    b_update: Tensor
    w_cand: Tensor
    u_cand: Tensor
    b_cand: Tensor

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator) -> "GruParams":
        """Uniform init on [-1/sqrt(hidden), +1/sqrt(hidden)] for all nine tensors."""
        bound = 1.0 / np.sqrt(hidden)

        def mat() -> Tensor:
            return Tensor(rng.uniform(-bound, bound, (hidden, hidden)), requires_grad=True)

        def vec() -> Tensor:
            return Tensor(rng.uniform(-bound, bound, hidden), requires_grad=True)

        return cls(hidden, mat(), mat(), vec(), mat(), mat(), vec(), mat(), mat(), vec())

    @classmethod
    def zeros(cls, hidden: int) -> "GruParams":
        def mat() -> Tensor:
            return Tensor(np.zeros((hidden, hidden)), requires_grad=True)

        def vec() -> Tensor:
            return Tensor(np.zeros(hidden), requires_grad=True)

        return cls(hidden, mat(), mat(), vec(), mat(), mat(), vec(), mat(), mat(), vec())

    def named(self, prefix: str = "gru") -> dict[str, Tensor]:
        return {
            f"{prefix}.w_reset": self.w_reset, f"{prefix}.u_reset": self.u_reset,
            f"{prefix}.b_reset": self.b_reset,
            f"{prefix}.w_update": self.w_update, f"{prefix}.u_update": self.u_update,
            f"{prefix}.b_update": self.b_update,
            f"{prefix}.w_cand": self.w_cand, f"{prefix}.u_cand": self.u_cand,
            f"{prefix}.b_cand": self.b_cand,
        }


@dataclass
class GateActivations:
    """Gate outputs: reset and update in (0, 1), candidate in (-1, 1)."""

    reset: Tensor
    update: Tensor
    candidate: Tensor


def _check_args(below: Tensor, state: Tensor, p: GruParams) -> None:
    if below.shape != state.shape:
        raise ShapeError(f"gate arguments need matching shapes, got {below.shape} vs {state.shape}")
    if below.data.ndim not in (1, 2) or below.shape[0] != p.hidden:
        raise ShapeError(f"gate arguments need width {p.hidden}, got shape {below.shape}")


def _gate_affine(w: Tensor, x: Tensor, u: Tensor, h: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim == 1:
        return add(add(matvec(w, x), matvec(u, h)), b)
    return addcol(add(matmul(w, x), matmul(u, h)), b)


def gru_gates(below: Tensor, state: Tensor, p: GruParams) -> GateActivations:
    """Evaluate the three gates; works on vectors or column-stacked matrices."""
    _check_args(below, state, p)
    reset = sigmoid(_gate_affine(p.w_reset, below, p.u_reset, state, p.b_reset))
    update = sigmoid(_gate_affine(p.w_update, below, p.u_update, state, p.b_update))
    candidate = tanh(_gate_affine(p.w_cand, below, p.u_cand, hadamard(reset, state), p.b_cand))
    return GateActivations(reset=reset, update=update, candidate=candidate)


def gru_discrete_step(below: Tensor, state: Tensor, p: GruParams) -> Tensor:
    """One classic gated update: update * state + (1 - update) * candidate."""
    gates = gru_gates(below, state, p)
    return add(hadamard(gates.update, state),
               hadamard(one_minus(gates.update), gates.candidate))


def gru_ode_field(below: Tensor, state: Tensor, p: GruParams) -> Tensor:
    """Continuous-time relaxation toward the candidate: (1 - update) * (candidate - state).

    An explicit Euler step of size <= 1 keeps states inside [-1, 1]^H
    because the result is a convex combination of state and candidate.
    """
    gates = gru_gates(below, state, p)
    return hadamard(one_minus(gates.update), sub(gates.candidate, state))


@dataclass
class InputEncoder:
    """Affine map from observation width d to hidden width h."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "InputEncoder":
        bound = 1.0 / np.sqrt(in_dim)
        return cls(Tensor(rng.uniform(-bound, bound, (hidden, in_dim)), requires_grad=True),
                   Tensor(rng.uniform(-bound, bound, hidden), requires_grad=True))

    @classmethod
    def identity(cls, hidden: int) -> "InputEncoder":
        """Pass-through encoder; only valid when the input width equals hidden."""
        return cls(Tensor(np.eye(hidden), requires_grad=True),
                   Tensor(np.zeros(hidden), requires_grad=True))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def hidden(self) -> int:
        return self.weight.shape[0]

    def named(self, prefix: str = "encoder") -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def encode_input(x: Tensor, enc: InputEncoder) -> Tensor:
    if x.data.ndim != 1 or x.shape[0] != enc.in_dim:
        raise ShapeError(f"encoder expects width {enc.in_dim}, got shape {x.shape}")
    return add(matvec(enc.weight, x), enc.bias)


@dataclass
class OutputHead:
    """Affine readout from hidden width h to output width c."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, hidden: int, out_dim: int, rng: np.random.Generator) -> "OutputHead":
        bound = 1.0 / np.sqrt(hidden)
        return cls(Tensor(rng.uniform(-bound, bound, (out_dim, hidden)), requires_grad=True),
                   Tensor(rng.uniform(-bound, bound, out_dim), requires_grad=True))

    @property
    def hidden(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, h: Tensor) -> Tensor:
        """Map one hidden vector, or a matrix of column-stacked hidden vectors."""
        if h.data.ndim == 1:
            return add(matvec(self.weight, h), self.bias)
        return addcol(matmul(self.weight, h), self.bias)

    def named(self, prefix: str = "head") -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}
