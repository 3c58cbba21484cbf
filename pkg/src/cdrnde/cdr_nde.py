"""Two-stage continuous-depth recurrent model.

Stage 1 sweeps a gated field with a skip term along observation time,
producing the depth-0 row. Stage 2 then grows each observation's hidden
state along a continuous depth axis, column by column from left to
right; a column's field couples it to the interpolated state of the
column one observation earlier, so information flows strictly
left-to-right.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .ad import Tensor, add, hadamard, one_minus, sub
from .data import SequenceRecord
from .errors import ConfigError, SolverError
from .gru import GruParams, InputEncoder, OutputHead, gru_gates
from .gru_ode import ModelOutput, encode_sequence, evolve_over_time
from .solvers import SolveConfig, Trajectory, interpolate, solve


def horizontal_field(state: Tensor, below: Tensor, p: GruParams) -> Tensor:
    """Rate of change along observation time.

    Gated update toward the candidate plus a skip from the state one
    depth level below: update*state + (1-update)*candidate + below - state.
    """
    gates = gru_gates(below, state, p)
    gated = add(hadamard(gates.update, state),
                hadamard(one_minus(gates.update), gates.candidate))
    return sub(add(gated, below), state)


def vertical_field(state: Tensor, left: Tensor, p: GruParams) -> Tensor:
    """Rate of change along depth: a gated blend of the left-neighbor
    state and the candidate, with gates fed by (state, left)."""
    gates = gru_gates(state, left, p)
    return add(hadamard(gates.update, left),
               hadamard(one_minus(gates.update), gates.candidate))


@dataclass
class HiddenGrid:
    """Depth trajectories, one per observation, plus the depth-0 row."""

    columns: list[Trajectory]
    row0: Trajectory


@dataclass
class CdrNdeModel:
    """Sequential-depth model; `gru_depth` is `gru_time` when weights are tied."""

    gru_time: GruParams
    gru_depth: GruParams
    encoder: InputEncoder
    head: OutputHead
    depth_total: float = 1.0
    solve_t: SolveConfig = dc_field(default_factory=SolveConfig)
    solve_depth: SolveConfig = dc_field(default_factory=SolveConfig)

    kind = "cdr_nde"

    def __post_init__(self):
        if self.depth_total < 0:
            raise ConfigError(f"depth_total must be >= 0, got {self.depth_total}")

    @property
    def tied(self) -> bool:
        return self.gru_depth is self.gru_time

    @classmethod
    def init(cls, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
             tie_weights: bool = True, depth_total: float = 1.0,
             solve_t: SolveConfig | None = None,
             solve_depth: SolveConfig | None = None) -> "CdrNdeModel":
        gru_time = GruParams.init(hidden, rng)
        gru_depth = gru_time if tie_weights else GruParams.init(hidden, rng)
        return cls(gru_time=gru_time, gru_depth=gru_depth,
                   encoder=InputEncoder.init(in_dim, hidden, rng),
                   head=OutputHead.init(hidden, out_dim, rng),
                   depth_total=depth_total,
                   solve_t=solve_t or SolveConfig(),
                   solve_depth=solve_depth or SolveConfig())

    def parameters(self) -> dict[str, Tensor]:
        out = self.gru_time.named("gru_time")
        if not self.tied:
            out.update(self.gru_depth.named("gru_depth"))
        out.update(self.encoder.named("encoder"))
        out.update(self.head.named("head"))
        return out

    def config(self) -> dict:
        return {"in_dim": self.encoder.in_dim, "hidden": self.encoder.hidden,
                "out_dim": self.head.out_dim, "tie_weights": self.tied,
                "depth_total": self.depth_total,
                "solve_t": self.solve_t.to_dict(),
                "solve_depth": self.solve_depth.to_dict()}

    def forward(self, seq: SequenceRecord) -> ModelOutput:
        return cdr_nde_forward(seq, self)


def stage1_solve(seq: SequenceRecord, m: CdrNdeModel) -> Trajectory:
    """Depth-0 row: integrate the horizontal field across the observation
    times, driven by the zero-order-hold encoded inputs."""
    encoded = encode_sequence(seq, m.encoder)
    traj, _ = evolve_over_time(
        seq.times, encoded[1:], encoded[0],
        lambda state, below: horizontal_field(state, below, m.gru_time),
        m.solve_t)
    return traj


def stage2_solve(row0: Trajectory, seq: SequenceRecord, m: CdrNdeModel) -> HiddenGrid:
    """Grow every observation's state along depth, left to right.

    Column i starts from the depth-0 state at its observation time and is
    coupled to the interpolated trajectory of column i-1; the first
    column sees a zero left neighbor.
    """
    hidden = m.encoder.hidden
    zero_left = Tensor(np.zeros(hidden))
    columns: list[Trajectory] = []
    prev: Trajectory | None = None
    for i, t_i in enumerate(seq.times):
        y0 = interpolate(row0, t_i)
        if prev is None:
            left_at = lambda s: zero_left
        else:
            left_at = lambda s, traj=prev: interpolate(traj, s)
        if m.depth_total == 0.0:
            traj = Trajectory(knots=[(0.0, y0)], nfe=0)
        else:
            try:
                traj = solve(
                    lambda s, y, left=left_at: vertical_field(y, left(s), m.gru_depth),
                    y0, 0.0, m.depth_total, m.solve_depth)
            except SolverError as e:
                raise SolverError(f"depth solve failed: {e}", s=e.s, step=e.step,
                                  column=i) from e
        columns.append(traj)
        prev = traj
    return HiddenGrid(columns=columns, row0=row0)


def cdr_nde_forward(seq: SequenceRecord, m: CdrNdeModel) -> ModelOutput:
    row0 = stage1_solve(seq, m)
    grid = stage2_solve(row0, seq, m)
    outputs = [m.head.apply(c.final_state) for c in grid.columns]
    return ModelOutput(outputs=outputs, nfe_time=row0.nfe,
                       nfe_depth=sum(c.nfe for c in grid.columns))
