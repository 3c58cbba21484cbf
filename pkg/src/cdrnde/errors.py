"""Exception types shared across the package."""

from __future__ import annotations


class ContractError(RuntimeError):
    """An operation was called in a way its contract forbids."""


class ShapeError(ValueError):
    """Operands have incompatible shapes; the message names both."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(ValueError):
    """A dataset file or record is malformed; messages carry line numbers."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible with the model."""


class NumericalError(RuntimeError):
    """Training or evaluation hit a non-finite quantity."""


class SolverError(RuntimeError):
    """An ODE solve failed.

    Carries enough context to locate the failure: the independent
    coordinate `s` reached, the step index, and (when the solve belongs
    to one column of a grid) the column index.
    """

    def __init__(self, message: str, *, s: float | None = None,
                 step: int | None = None, column: int | None = None):
        parts = [message]
        if s is not None:
            parts.append(f"s={s!r}")
        if step is not None:
            parts.append(f"step={step}")
        if column is not None:
            parts.append(f"column={column}")
        super().__init__("; ".join(parts))
        self.s = s
        self.step = step
        self.column = column


class OutOfRangeError(ValueError):
    """A query point lies outside the span covered by a trajectory."""
