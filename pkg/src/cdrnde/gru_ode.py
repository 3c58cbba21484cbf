"""Hidden-state evolution along observation time, and the plain
continuous-time recurrent baseline built from it.

The first observation is encoded into the initial hidden state; between
consecutive observations the state follows a driven field with the
encoded observation arriving at the interval's right end held constant
(zero-order hold). With the relaxation field this is the `gru_ode`
baseline; the depth models reuse the same sweep for their first row.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .ad import Tensor
from .data import SequenceRecord
from .errors import ContractError
from .gru import (GruParams, InputEncoder, OutputHead, encode_input,
                  gru_ode_field)
from .solvers import SolveConfig, Trajectory, solve


@dataclass
class ModelOutput:
    """Per-step outputs plus field-evaluation counts of both solve axes."""

    outputs: list[Tensor]
    nfe_time: int = 0
    nfe_depth: int = 0


DrivenField = Callable[[Tensor, Tensor], Tensor]  # (state, below) -> d state


def evolve_over_time(times: list[float], drive: list[Tensor], y0: Tensor,
                     field: DrivenField, cfg: SolveConfig) -> tuple[Trajectory, list[Tensor]]:
    """Integrate a driven field across consecutive observation intervals.

    `drive[i]` is held constant while integrating from times[i] to
    times[i+1]. Returns the stitched trajectory, whose knots include
    every observation time, plus the state at each observation time.
    A single observation yields a single-knot trajectory.
    """
    if len(drive) != len(times) - 1:
        raise ContractError(
            f"need one drive value per interval: {len(times)} times, {len(drive)} drives")
    knots: list[tuple[float, Tensor]] = [(float(times[0]), y0)]
    states = [y0]
    nfe = 0
    y = y0
    for i in range(len(times) - 1):
        below = drive[i]
        seg = solve(lambda s, st: field(st, below), y, times[i], times[i + 1], cfg)
        knots.extend(seg.knots[1:])
        nfe += seg.nfe
        y = seg.final_state
        states.append(y)
    return Trajectory(knots=knots, nfe=nfe), states


def encode_sequence(seq: SequenceRecord, enc: InputEncoder) -> list[Tensor]:
    return [encode_input(Tensor(np.asarray(x)), enc) for x in seq.inputs]


@dataclass
class GruOdeModel:
    """Relaxation-field recurrent baseline: hidden state drifts toward the
    gate candidate between observations; an affine head reads each
    observation-time state."""

    gru: GruParams
    encoder: InputEncoder
    head: OutputHead
    solve_t: SolveConfig = dc_field(default_factory=SolveConfig)

    kind = "gru_ode"

    @classmethod
    def init(cls, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
             solve_t: SolveConfig | None = None) -> "GruOdeModel":
        return cls(gru=GruParams.init(hidden, rng),
                   encoder=InputEncoder.init(in_dim, hidden, rng),
                   head=OutputHead.init(hidden, out_dim, rng),
                   solve_t=solve_t or SolveConfig())

    def parameters(self) -> dict[str, Tensor]:
        return {**self.gru.named("gru"), **self.encoder.named("encoder"),
                **self.head.named("head")}

    def config(self) -> dict:
        return {"in_dim": self.encoder.in_dim, "hidden": self.encoder.hidden,
                "out_dim": self.head.out_dim, "solve_t": self.solve_t.to_dict()}

    def forward(self, seq: SequenceRecord) -> ModelOutput:
        encoded = encode_sequence(seq, self.encoder)
        traj, states = evolve_over_time(
            seq.times, encoded[1:], encoded[0],
            lambda state, below: gru_ode_field(below, state, self.gru),
            self.solve_t)
        return ModelOutput(outputs=[self.head.apply(h) for h in states],
                           nfe_time=traj.nfe, nfe_depth=0)
