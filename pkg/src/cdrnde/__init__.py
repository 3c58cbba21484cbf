"""Continuous-depth recurrent differential-equation models for irregularly
sampled sequence labeling, with a self-contained tape autodiff core and
fixed/adaptive ODE solvers."""

from .ad import Tape, Tensor, backward, grad_check
from .cdr_nde import CdrNdeModel, HiddenGrid, cdr_nde_forward, stage1_solve, stage2_solve
from .data import (SequenceRecord, load_jsonl, make_batches, split,
                   synth_classification, synth_regression)
from .gru import GateActivations, GruParams, InputEncoder, OutputHead
from .gru_ode import GruOdeModel, ModelOutput
from .heat import HeatModel, RowState, discrete_laplacian, fdm_step, heat_forward, heat_row_init, mol_field
from .solvers import SolveConfig, Trajectory, dopri5_solve, euler_solve, interpolate
from .training import (RmspropState, build_model, checkpoint_load, checkpoint_save,
                       cross_entropy, evaluate, lr_at_epoch, mse, rmsprop_step,
                       train_epoch)

__all__ = [
    "Tape", "Tensor", "backward", "grad_check",
    "CdrNdeModel", "HiddenGrid", "cdr_nde_forward", "stage1_solve", "stage2_solve",
    "SequenceRecord", "load_jsonl", "make_batches", "split",
    "synth_classification", "synth_regression",
    "GateActivations", "GruParams", "InputEncoder", "OutputHead",
    "GruOdeModel", "ModelOutput",
    "HeatModel", "RowState", "discrete_laplacian", "fdm_step", "heat_forward",
    "heat_row_init", "mol_field",
    "SolveConfig", "Trajectory", "dopri5_solve", "euler_solve", "interpolate",
    "RmspropState", "build_model", "checkpoint_load", "checkpoint_save",
    "cross_entropy", "evaluate", "lr_at_epoch", "mse", "rmsprop_step", "train_epoch",
]

__version__ = "0.1.0"
