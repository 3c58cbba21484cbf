"""Losses, RMSprop, the epoch loops, and JSON checkpoints."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .ad import Tape, Tensor, backward, exp, hadamard, log, pick, scale, sub, tsum, zero_grads
from .cdr_nde import CdrNdeModel
from .data import Batch, SequenceRecord
from .errors import CheckpointError, ConfigError, ContractError, NumericalError
from .gru_ode import GruOdeModel, ModelOutput
from .heat import HeatModel
from .solvers import SolveConfig

log_ = logging.getLogger(__name__)

MODEL_KINDS = ("gru_ode", "cdr_nde", "cdr_nde_heat")
TASKS = ("classification", "regression")


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax probability of the target class, computed with
    max subtraction so large logits stay finite."""
    if logits.data.ndim != 1 or logits.shape[0] < 2:
        raise ContractError(f"cross_entropy needs a logit vector of width >= 2, got {logits.shape}")
    if not 0 <= int(target) < logits.shape[0]:
        raise ContractError(f"target {target} out of range for {logits.shape[0]} classes")
    top = float(logits.data.max())
    shifted = sub(logits, Tensor(np.full(logits.shape, top)))
    lse = log(tsum(exp(shifted)))
    return sub(lse, pick(shifted, int(target)))


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    if pred.shape != target.shape:
        raise ContractError(f"mse needs matching shapes, got {pred.shape} vs {target.shape}")
    d = sub(pred, target)
    return scale(1.0 / d.size, tsum(hadamard(d, d)))


def sequence_loss(outputs: list[Tensor], targets: list, task: str) -> Tensor:
    """Mean per-step loss over one sequence."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if len(outputs) != len(targets):
        raise ContractError(f"{len(outputs)} outputs vs {len(targets)} targets")
    terms = []
    for out, tgt in zip(outputs, targets):
        if task == "classification":
            terms.append(cross_entropy(out, int(tgt)))
        else:
            terms.append(mse(out, Tensor(np.asarray(tgt, dtype=np.float64))))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return scale(1.0 / len(terms), total)


@dataclass
class LrSchedule:
    """Step decay: base_lr until the milestone epoch, then base_lr * gamma."""

    base_lr: float = 5e-3
    gamma: float = 0.1
    milestone: int = 100


def lr_at_epoch(epoch: int, sched: LrSchedule) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return sched.base_lr * (sched.gamma if epoch >= sched.milestone else 1.0)


@dataclass
class RmspropState:
    """Per-parameter running mean of squared gradients."""

    lr: float = 5e-3
    alpha: float = 0.99
    eps: float = 1e-8
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def rmsprop_step(params: Mapping[str, Tensor], state: RmspropState,
                 grad_clip: float | None = 10.0) -> bool:
    """One update: v <- alpha*v + (1-alpha)*g^2; p <- p - lr*g/(sqrt(v)+eps).

    Gradients are clipped to the global norm `grad_clip` first (None or 0
    disables). A non-finite gradient skips the whole step and logs the
    incident; returns whether the step was applied.
    """
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad.data
        if not np.all(np.isfinite(g)):
            log_.warning("non-finite gradient in %s; optimizer step skipped", name)
            return False
        grads[name] = g
    if grad_clip:
        norm = _global_norm(grads)
        if norm > grad_clip:
            ratio = grad_clip / norm
            grads = {name: g * ratio for name, g in grads.items()}
    for name, p in params.items():
        v = state.v.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            state.v[name] = v
        g = grads[name]
        v *= state.alpha
        v += (1.0 - state.alpha) * g * g
        p.data -= state.lr * g / (np.sqrt(v) + state.eps)
    return True


@dataclass
class BatchStats:
    loss: float = 0.0
    correct: int = 0
    steps: int = 0
    sq_err: float = 0.0
    nfe_depth: list[int] = field(default_factory=list)


def batch_loss(model, batch: Batch, task: str) -> tuple[Tensor, BatchStats]:
    """Mean over the batch of each sequence's mean step loss.

    Sequences are rebuilt from the padded arrays through the mask, so
    padding positions contribute exactly nothing.
    """
    stats = BatchStats()
    seq_losses = []
    for b in range(batch.size):
        seq = batch.sequence(b)
        result: ModelOutput = model.forward(seq)
        seq_losses.append(sequence_loss(result.outputs, seq.targets, task))
        stats.nfe_depth.append(result.nfe_depth)
        for out, tgt in zip(result.outputs, seq.targets):
            stats.steps += 1
            if task == "classification":
                stats.correct += int(np.argmax(out.data) == int(tgt))
            else:
                stats.sq_err += float(np.mean((out.data - np.asarray(tgt)) ** 2))
    total = seq_losses[0]
    for t in seq_losses[1:]:
        total = total + t
    loss = scale(1.0 / len(seq_losses), total)
    stats.loss = float(loss.data)
    return loss, stats


@dataclass
class EpochSummary:
    loss: float
    metric: float
    nfe_mean: float


def _metric(stats_steps: int, correct: int, sq_err: float, task: str) -> float:
    if stats_steps == 0:
        return float("nan")
    if task == "classification":
        return correct / stats_steps
    return sq_err / stats_steps


def train_epoch(model, batches: list[Batch], opt: RmspropState, *,
                task: str, grad_clip: float | None = 10.0) -> EpochSummary:
    """One pass over the batches: forward, backward, one RMSprop step per
    batch. Aborts with diagnostics on a non-finite loss."""
    if not batches:
        raise ContractError("train_epoch needs at least one batch")
    losses = []
    correct = 0
    steps = 0
    sq_err = 0.0
    nfes: list[int] = []
    params = model.parameters()
    for bi, batch in enumerate(batches):
        zero_grads(params)
        with Tape() as tape:
            loss, stats = batch_loss(model, batch, task)
        if not math.isfinite(stats.loss):
            raise NumericalError(
                f"non-finite loss {stats.loss!r} in batch {bi} (ids {batch.ids[:3]}...)")
        backward(loss, tape)
        rmsprop_step(params, opt, grad_clip)
        losses.append(stats.loss)
        correct += stats.correct
        steps += stats.steps
        sq_err += stats.sq_err
        nfes.extend(stats.nfe_depth)
    return EpochSummary(loss=float(np.mean(losses)),
                        metric=_metric(steps, correct, sq_err, task),
                        nfe_mean=float(np.mean(nfes)) if nfes else 0.0)


@dataclass
class EvalReport:
    loss: float
    metric: float
    n_sequences: int
    n_steps: int
    nfe_min: int
    nfe_max: int
    nfe_mean: float

    def to_dict(self, task: str) -> dict:
        name = "accuracy" if task == "classification" else "mse"
        return {"loss": self.loss, name: self.metric,
                "n_sequences": self.n_sequences, "n_steps": self.n_steps,
                "nfe": {"min": self.nfe_min, "max": self.nfe_max, "mean": self.nfe_mean}}


def evaluate(model, batches: list[Batch], task: str) -> EvalReport:
    """Forward-only pass collecting loss, the task metric, and depth-solve
    field-evaluation stats."""
    losses = []
    correct = 0
    steps = 0
    sq_err = 0.0
    nfes: list[int] = []
    n_seq = 0
    for batch in batches:
        loss, stats = batch_loss(model, batch, task)
        losses.append(stats.loss)
        correct += stats.correct
        steps += stats.steps
        sq_err += stats.sq_err
        nfes.extend(stats.nfe_depth)
        n_seq += batch.size
    if n_seq == 0:
        raise ContractError("evaluate needs at least one sequence")
    return EvalReport(loss=float(np.mean(losses)),
                      metric=_metric(steps, correct, sq_err, task),
                      n_sequences=n_seq, n_steps=steps,
                      nfe_min=int(min(nfes)), nfe_max=int(max(nfes)),
                      nfe_mean=float(np.mean(nfes)))


def build_model(kind: str, *, in_dim: int, hidden: int, out_dim: int,
                rng: np.random.Generator, depth_total: float = 1.0,
                diffusivity: float = 1.0, spacing_mode: str = "uniform",
                boundary_mode: str = "zero_flux", tie_weights: bool = True,
                solve_t: SolveConfig | None = None,
                solve_depth: SolveConfig | None = None):
    if kind == "gru_ode":
        return GruOdeModel.init(in_dim, hidden, out_dim, rng, solve_t=solve_t)
    if kind == "cdr_nde":
        return CdrNdeModel.init(in_dim, hidden, out_dim, rng, tie_weights=tie_weights,
                                depth_total=depth_total, solve_t=solve_t,
                                solve_depth=solve_depth)
    if kind == "cdr_nde_heat":
        return HeatModel.init(in_dim, hidden, out_dim, rng, depth_total=depth_total,
                              diffusivity=diffusivity, spacing_mode=spacing_mode,
                              boundary_mode=boundary_mode, solve_t=solve_t,
                              solve_depth=solve_depth)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _model_from_config(kind: str, config: dict):
    cfg = dict(config)
    rng = np.random.default_rng(0)
    solve_t = SolveConfig(**cfg.pop("solve_t")) if "solve_t" in cfg else None
    solve_depth = SolveConfig(**cfg.pop("solve_depth")) if "solve_depth" in cfg else None
    return build_model(kind, rng=rng, solve_t=solve_t, solve_depth=solve_depth, **cfg)


def checkpoint_save(model, path: str | Path) -> None:
    """Serialize kind, config, and every named parameter as JSON.

    Floats go through repr round-tripping, so save -> load -> save is
    byte-identical.
    """
    payload = {
        "format_version": 1,
        "model_kind": model.kind,
        "config": model.config(),
        "params": {
            name: {"shape": list(t.shape), "values": [float(v) for v in t.data.ravel()]}
            for name, t in model.parameters().items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def checkpoint_load(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e.msg}") from e
    if not isinstance(payload, dict) or payload.get("format_version") != 1:
        raise CheckpointError(
            f"unsupported checkpoint format {payload.get('format_version')!r} in {path}")
    for key in ("model_kind", "config", "params"):
        if key not in payload:
            raise CheckpointError(f"checkpoint {path} missing key {key!r}")
    model = _model_from_config(payload["model_kind"], payload["config"])
    params = model.parameters()
    saved = payload["params"]
    if set(saved) != set(params):
        raise CheckpointError(
            f"checkpoint params {sorted(saved)} do not match model params {sorted(params)}")
    for name, t in params.items():
        entry = saved[name]
        shape = tuple(entry["shape"])
        if shape != t.shape:
            raise CheckpointError(
                f"checkpoint param {name} has shape {shape}, model expects {t.shape}")
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != t.data.size:
            raise CheckpointError(f"checkpoint param {name} has {values.size} values")
        t.data = values.reshape(shape)
    return model
