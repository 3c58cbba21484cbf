"""Initial value problem solvers that differentiate through their steps.

Both solvers build the solution out of tape ops (add/scale), so gradients
flow through every accepted stage combination. The adaptive controller's
accept/reject decisions and step sizes are ordinary floats computed from
detached values; they steer the discretization but carry no gradient,
which is the usual discretize-then-optimize treatment.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ad import Tensor, add, scale, sub
from .errors import ConfigError, ContractError, OutOfRangeError, SolverError

Field = Callable[[float, Tensor], Tensor]

METHODS = ("euler", "dopri5")


@dataclass
class SolveConfig:
    """Solver choice plus its knobs.

    `euler_steps_per_interval` is the fixed step count used across one
    solve span; `atol`/`rtol` and `max_steps` govern the adaptive method.
    """

    method: str = "euler"
    euler_steps_per_interval: int = 2
    atol: float = 1e-3
    rtol: float = 1e-3
    max_steps: int = 10_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown solver method {self.method!r}; expected one of {METHODS}")
        if self.euler_steps_per_interval < 1:
            raise ConfigError("euler_steps_per_interval must be >= 1")
        if self.atol <= 0 or self.rtol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    def to_dict(self) -> dict:
        return {"method": self.method,
                "euler_steps_per_interval": self.euler_steps_per_interval,
                "atol": self.atol, "rtol": self.rtol, "max_steps": self.max_steps}


@dataclass
class Trajectory:
    """Solution knots (s, state) in strictly increasing s, plus the field
    evaluation count (rejected attempts included)."""

    knots: list[tuple[float, Tensor]]
    nfe: int = 0

    @property
    def s_first(self) -> float:
        return self.knots[0][0]

    @property
    def s_last(self) -> float:
        return self.knots[-1][0]

    @property
    def final_state(self) -> Tensor:
        return self.knots[-1][1]


def _check_span(s0: float, s1: float) -> None:
    if not (np.isfinite(s0) and np.isfinite(s1)) or s1 <= s0:
        raise ContractError(f"solve span needs s1 > s0, got [{s0!r}, {s1!r}]")


def _check_finite(f: Tensor, s: float, step: int) -> None:
    if not np.all(np.isfinite(f.data)):
        raise SolverError("field returned a non-finite value", s=s, step=step)


def euler_solve(field: Field, y0: Tensor, s0: float, s1: float, n_steps: int) -> Trajectory:
    """Fixed-step explicit Euler; records every intermediate state as a knot."""
    _check_span(s0, s1)
    if n_steps < 1:
        raise ContractError(f"euler_solve needs n_steps >= 1, got {n_steps}")
    span = s1 - s0
    h = span / n_steps
    y = y0
    knots = [(float(s0), y0)]
    for k in range(n_steps):
        s = s0 + span * (k / n_steps)
        f = field(s, y)
        _check_finite(f, s, k)
        y = add(y, scale(h, f))
        s_next = s1 if k + 1 == n_steps else s0 + span * ((k + 1) / n_steps)
        knots.append((float(s_next), y))
    return Trajectory(knots=knots, nfe=n_steps)


# Dormand-Prince 5(4) tableau. The last row of A doubles as the 5th order
# weights (the final stage is evaluated at the proposed solution), and ERR
# is the difference between the 5th and embedded 4th order weights.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_ERR = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _combine(y: Tensor, h: float, ks: list[Tensor], coeffs) -> Tensor:
    out = y
    for c, k in zip(coeffs, ks):
        if c != 0.0:
            out = add(out, scale(h * c, k))
    return out


def dopri5_solve(field: Field, y0: Tensor, s0: float, s1: float, cfg: SolveConfig) -> Trajectory:
    """Adaptive Dormand-Prince 5(4).

    Error norm: sqrt(mean((e_i / (atol + rtol * max(|y_i|, |yhat_i|)))^2))
    over the 5th and 4th order candidates. A step is accepted when the
    norm is <= 1; the next step factor is 0.9 * err^(-1/5) clamped to
    [0.2, 10]. The first attempted step is a tenth of the span.
    """
    _check_span(s0, s1)
    span = s1 - s0
    snap = 1e-12 * max(1.0, abs(s1))
    s = float(s0)
    y = y0
    h = span / 10.0
    knots = [(s, y)]
    nfe = 0
    attempts = 0
    while s < s1 - snap:
        attempts += 1
        if attempts > cfg.max_steps:
            raise SolverError(f"exceeded max_steps={cfg.max_steps}", s=s, step=attempts)
        h = min(h, s1 - s)
        ks: list[Tensor] = []
        for i in range(7):
            yi = _combine(y, h, ks, _A[i])
            ki = field(s + _C[i] * h, yi)
            _check_finite(ki, s + _C[i] * h, attempts)
            ks.append(ki)
        nfe += 7
        y5 = _combine(y, h, ks, _A[6])
        err_vec = h * sum(c * k.data for c, k in zip(_ERR, ks) if c != 0.0)
        y4_data = y5.data - err_vec
        sc = cfg.atol + cfg.rtol * np.maximum(np.abs(y5.data), np.abs(y4_data))
        err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
        if err <= 1.0:
            s = s + h
            if abs(s1 - s) <= snap:
                s = float(s1)
            y = y5
            knots.append((s, y))
        factor = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
        h = h * factor
    return Trajectory(knots=knots, nfe=nfe)


def solve(field: Field, y0: Tensor, s0: float, s1: float, cfg: SolveConfig) -> Trajectory:
    if cfg.method == "euler":
        return euler_solve(field, y0, s0, s1, cfg.euler_steps_per_interval)
    return dopri5_solve(field, y0, s0, s1, cfg)


def interpolate(traj: Trajectory, s: float) -> Tensor:
    """State at s, exact at knots, linear between them.

    Raises OutOfRangeError when s lies outside the trajectory's span
    (beyond a tiny float-fuzz allowance at the endpoints).
    """
    knots = traj.knots
    slack = 1e-9 * max(1.0, abs(traj.s_last - traj.s_first))
    if s < traj.s_first - slack or s > traj.s_last + slack:
        raise OutOfRangeError(
            f"s={s!r} outside trajectory span [{traj.s_first!r}, {traj.s_last!r}]")
    s = min(max(s, traj.s_first), traj.s_last)
    ss = [k[0] for k in knots]
    j = bisect.bisect_right(ss, s)
    if j > 0 and ss[j - 1] == s:
        return knots[j - 1][1]
    lo_s, lo_y = knots[j - 1]
    hi_s, hi_y = knots[j]
    w = (s - lo_s) / (hi_s - lo_s)
    return add(lo_y, scale(w, sub(hi_y, lo_y)))
