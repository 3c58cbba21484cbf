"""Depth evolution as diffusion along the sequence axis.

After the depth-0 row is rolled out along observation time, all hidden
states evolve jointly in depth: a discrete second difference couples
each state to both neighbors (diffusion), and a gated cell term couples
it to its left neighbor. The whole row is one stacked ODE system, so a
single solver controls the error of every column at once; one explicit
Euler step of that system is algebraically the classic forward
finite-difference update, and `fdm_step` implements that update as an
independent reference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .ad import (Tensor, add, col, cols, colscale, hadamard, hconcat, matvec,
                 one_minus, scale, sigmoid, stack_cols, sub, tanh)
from .data import SequenceRecord
from .errors import ConfigError, ContractError, SolverError
from .gru import GruParams, InputEncoder, OutputHead, gru_ode_field
from .gru_ode import ModelOutput, encode_sequence, evolve_over_time
from .solvers import SolveConfig, Trajectory, solve

SPACING_MODES = ("uniform", "actual")
BOUNDARY_MODES = ("zero_flux", "zero_ghost")


@dataclass
class RowState:
    """Hidden states of one sequence at a fixed depth, plus the time gaps
    between adjacent observations."""

    states: list[Tensor]
    gaps: list[float]

    def __post_init__(self):
        if len(self.gaps) != len(self.states) - 1:
            raise ContractError(
                f"{len(self.states)} states need {len(self.states) - 1} gaps, "
                f"got {len(self.gaps)}")
        for g in self.gaps:
            if g <= 0:
                raise ContractError(f"gaps must be positive, got {g!r}")


@dataclass
class HeatModel:
    """Diffusion-coupled depth model.

    `diffusivity` is a fixed constant, not a learned parameter.
    `spacing_mode` picks the stencil spacing: unit spacing between
    neighboring observations, or the actual time gaps. `boundary_mode`
    picks the ghost values outside the row: replicated edge states
    (zero flux) or zero vectors.
    """

    gru: GruParams
    encoder: InputEncoder
    head: OutputHead
    depth_total: float = 1.0
    diffusivity: float = 1.0
    spacing_mode: str = "uniform"
    boundary_mode: str = "zero_flux"
    solve_t: SolveConfig = dc_field(default_factory=SolveConfig)
    solve_depth: SolveConfig = dc_field(default_factory=SolveConfig)

    kind = "cdr_nde_heat"

    def __post_init__(self):
        if self.spacing_mode not in SPACING_MODES:
            raise ConfigError(f"unknown spacing_mode {self.spacing_mode!r}; expected {SPACING_MODES}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"unknown boundary_mode {self.boundary_mode!r}; expected {BOUNDARY_MODES}")
        if self.depth_total < 0:
            raise ConfigError(f"depth_total must be >= 0, got {self.depth_total}")
        if self.diffusivity <= 0:
            raise ConfigError(f"diffusivity must be positive, got {self.diffusivity}")

    @classmethod
    def init(cls, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
             depth_total: float = 1.0, diffusivity: float = 1.0,
             spacing_mode: str = "uniform", boundary_mode: str = "zero_flux",
             solve_t: SolveConfig | None = None,
             solve_depth: SolveConfig | None = None) -> "HeatModel":
        return cls(gru=GruParams.init(hidden, rng),
                   encoder=InputEncoder.init(in_dim, hidden, rng),
                   head=OutputHead.init(hidden, out_dim, rng),
                   depth_total=depth_total, diffusivity=diffusivity,
                   spacing_mode=spacing_mode, boundary_mode=boundary_mode,
                   solve_t=solve_t or SolveConfig(),
                   solve_depth=solve_depth or SolveConfig())

    def parameters(self) -> dict[str, Tensor]:
        return {**self.gru.named("gru"), **self.encoder.named("encoder"),
                **self.head.named("head")}

    def config(self) -> dict:
        return {"in_dim": self.encoder.in_dim, "hidden": self.encoder.hidden,
                "out_dim": self.head.out_dim, "depth_total": self.depth_total,
                "diffusivity": self.diffusivity, "spacing_mode": self.spacing_mode,
                "boundary_mode": self.boundary_mode,
                "solve_t": self.solve_t.to_dict(),
                "solve_depth": self.solve_depth.to_dict()}

    def forward(self, seq: SequenceRecord) -> ModelOutput:
        return heat_forward(seq, self)


def _row_init(seq: SequenceRecord, m: HeatModel) -> tuple[RowState, int]:
    encoded = encode_sequence(seq, m.encoder)
    traj, states = evolve_over_time(
        seq.times, encoded[1:], encoded[0],
        lambda state, below: gru_ode_field(below, state, m.gru),
        m.solve_t)
    gaps = [b - a for a, b in zip(seq.times, seq.times[1:])]
    return RowState(states=states, gaps=gaps), traj.nfe


def heat_row_init(seq: SequenceRecord, m: HeatModel) -> RowState:
    """Depth-0 row: relaxation-field rollout along time, one state per
    observation, first state = encoded first input."""
    return _row_init(seq, m)[0]


def _stencil_gaps(gaps: list[float], k: int, spacing_mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Left/right neighbor distances per column; boundary columns mirror
    their inner gap so a replicated ghost sits symmetrically."""
    if spacing_mode == "uniform" or k == 1:
        return np.ones(k), np.ones(k)
    d = np.asarray(gaps, dtype=np.float64)
    left = np.empty(k)
    right = np.empty(k)
    left[1:] = d
    right[:-1] = d
    left[0] = right[0]
    right[-1] = left[-1]
    return left, right


def _ghost_pair(x_mat: Tensor, boundary_mode: str) -> tuple[Tensor, Tensor]:
    h, k = x_mat.shape
    if boundary_mode == "zero_flux":
        return cols(x_mat, 0, 1), cols(x_mat, k - 1, k)
    zero = Tensor(np.zeros((h, 1)))
    return zero, zero


def _laplacian_matrix(x_mat: Tensor, gaps: list[float], m: HeatModel) -> Tensor:
    k = x_mat.shape[1]
    dl, dr = _stencil_gaps(gaps, k, m.spacing_mode)
    c_left = 2.0 * m.diffusivity / (dl * (dl + dr))
    c_mid = 2.0 * m.diffusivity / (dl * dr)
    c_right = 2.0 * m.diffusivity / (dr * (dl + dr))
    ghost_l, ghost_r = _ghost_pair(x_mat, m.boundary_mode)
    if k == 1:
        shifted_l, shifted_r = ghost_l, ghost_r
    else:
        shifted_l = hconcat([ghost_l, cols(x_mat, 0, k - 1)])
        shifted_r = hconcat([cols(x_mat, 1, k), ghost_r])
    return add(sub(colscale(shifted_l, c_left), colscale(x_mat, c_mid)),
               colscale(shifted_r, c_right))


def _cell_matrix(x_mat: Tensor, p: GruParams) -> Tensor:
    from .cdr_nde import vertical_field
    h, k = x_mat.shape
    zero_col = Tensor(np.zeros((h, 1)))
    left = zero_col if k == 1 else hconcat([zero_col, cols(x_mat, 0, k - 1)])
    return vertical_field(x_mat, left, p)


def _mol_matrix(x_mat: Tensor, gaps: list[float], m: HeatModel,
                include_cell: bool = True) -> Tensor:
    lap = _laplacian_matrix(x_mat, gaps, m)
    if not include_cell:
        return lap
    return add(lap, _cell_matrix(x_mat, m.gru))


def discrete_laplacian(row: RowState, m: HeatModel) -> list[Tensor]:
    """Second difference of the row along the sequence axis, scaled by the
    diffusivity; constant rows map to zero under zero-flux boundaries."""
    x_mat = stack_cols(row.states)
    lap = _laplacian_matrix(x_mat, row.gaps, m)
    return [col(lap, j) for j in range(len(row.states))]


def mol_field(row: RowState, m: HeatModel, include_cell: bool = True) -> list[Tensor]:
    """Depth velocity of every column: diffusion plus (optionally) the
    gated left-neighbor cell term."""
    x_mat = stack_cols(row.states)
    f = _mol_matrix(x_mat, row.gaps, m, include_cell)
    return [col(f, j) for j in range(len(row.states))]


def fdm_step(row: RowState, dstep: float, m: HeatModel,
             include_cell: bool = True) -> RowState:
    """One forward finite-difference update of the whole row.

    Deliberately written as per-column stencil arithmetic (no shared code
    with `mol_field`) so the two routes cross-validate each other; the
    result must match one explicit Euler step of `mol_field`.
    """
    if dstep < 0:
        raise ContractError(f"step must be >= 0, got {dstep}")
    k = len(row.states)
    dl, dr = _stencil_gaps(row.gaps, k, m.spacing_mode)
    zero = Tensor(np.zeros_like(row.states[0].data))
    zero_flux = m.boundary_mode == "zero_flux"
    p = m.gru
    new_states = []
    for i in range(k):
        h = row.states[i]
        h_left = row.states[i - 1] if i > 0 else (row.states[0] if zero_flux else zero)
        h_right = row.states[i + 1] if i < k - 1 else (row.states[k - 1] if zero_flux else zero)
        c_l = 2.0 * m.diffusivity / (dl[i] * (dl[i] + dr[i]))
        c_m = 2.0 * m.diffusivity / (dl[i] * dr[i])
        c_r = 2.0 * m.diffusivity / (dr[i] * (dl[i] + dr[i]))
        acc = add(sub(scale(dstep * c_l, h_left), scale(dstep * c_m, h)),
                  scale(dstep * c_r, h_right))
        if include_cell:
            left = row.states[i - 1] if i > 0 else zero
            reset = sigmoid(add(add(matvec(p.w_reset, h), matvec(p.u_reset, left)), p.b_reset))
            update = sigmoid(add(add(matvec(p.w_update, h), matvec(p.u_update, left)), p.b_update))
            cand = tanh(add(add(matvec(p.w_cand, h),
                                matvec(p.u_cand, hadamard(reset, left))), p.b_cand))
            cell = add(hadamard(update, left), hadamard(one_minus(update), cand))
            acc = add(acc, scale(dstep, cell))
        new_states.append(add(acc, h))
    return RowState(states=new_states, gaps=list(row.gaps))


def heat_forward(seq: SequenceRecord, m: HeatModel) -> ModelOutput:
    """Roll out the depth-0 row, evolve the stacked row system over the
    depth span, then read every final column through the head."""
    row, nfe_time = _row_init(seq, m)
    x0 = stack_cols(row.states)
    if m.depth_total == 0.0:
        traj = Trajectory(knots=[(0.0, x0)], nfe=0)
    else:
        try:
            traj = solve(lambda s, y: _mol_matrix(y, row.gaps, m),
                         x0, 0.0, m.depth_total, m.solve_depth)
        except SolverError as e:
            raise SolverError(f"depth solve failed: {e}", s=e.s, step=e.step) from e
    logits = m.head.apply(traj.final_state)
    outputs = [col(logits, j) for j in range(len(row.states))]
    return ModelOutput(outputs=outputs, nfe_time=nfe_time, nfe_depth=traj.nfe)
