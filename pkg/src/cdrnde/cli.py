"""Command line interface: train, eval, gradcheck, bench, synth.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical
failure, 4 gradient check failure.
"""

from __future__ import annotations

import os

_threads = os.environ.get("CDRNDE_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ad import grad_check
from .data import (SequenceRecord, load_jsonl, make_batches, normalize_times,
                   persistence_floor, save_jsonl, split, synth_classification,
                   synth_regression)
from .errors import (CheckpointError, ConfigError, ContractError, DataError,
                     NumericalError, SolverError)
from .solvers import SolveConfig
from .training import (LrSchedule, RmspropState, build_model, checkpoint_load,
                       checkpoint_save, evaluate, lr_at_epoch, sequence_loss,
                       train_epoch, MODEL_KINDS, TASKS)

log = logging.getLogger("cdrnde")


@dataclass
class RunConfig:
    """Everything one training run needs; serialized verbatim to run.json."""

    model: str = "cdr_nde_heat"
    task: str = "classification"
    hidden_dim: int = 64
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0
    base_lr: float = 5e-3
    lr_gamma: float = 0.1
    lr_milestone: int = 100
    depth_total: float = 1.0
    diffusivity: float = 1.0
    spacing_mode: str = "uniform"
    boundary_mode: str = "zero_flux"
    tie_weights: bool = True
    solver: str = "euler"
    euler_steps: int = 2
    atol: float = 1e-3
    rtol: float = 1e-3
    max_steps: int = 10_000
    grad_clip: float = 10.0
    record_timing: bool = False
    normalize_times: bool = False
    train_data: str = ""
    val_data: str = ""
    out_dir: str = "run_out"

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODEL_KINDS}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for name in ("hidden_dim", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        self.solve_config()  # validates solver fields

    def solve_config(self) -> SolveConfig:
        return SolveConfig(method=self.solver,
                           euler_steps_per_interval=self.euler_steps,
                           atol=self.atol, rtol=self.rtol, max_steps=self.max_steps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    """Defaults, then the JSON file, then CLI flags; unknown keys are fatal."""
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"no such config file: {p}")
        try:
            loaded = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {p}: {e.msg}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {p} must be a JSON object")
        unknown = set(loaded) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key, val in overrides.items():
        if val is not None:
            values.update({key: val})
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(f"bad config: {e}") from e
    cfg.validate()
    return cfg


def _infer_dims(records: list[SequenceRecord], task: str) -> tuple[int, int]:
    if not records:
        raise DataError("dataset is empty")
    in_dim = records[0].width
    if task == "classification":
        out_dim = 1 + max(int(t) for r in records for t in r.targets)
        out_dim = max(out_dim, 2)
    else:
        width = records[0].target_width
        if width is None:
            raise DataError("regression task needs vector targets")
        out_dim = width
    return in_dim, out_dim


def _build_from_config(cfg: RunConfig, in_dim: int, out_dim: int):
    rng = np.random.default_rng(cfg.seed)
    solve = cfg.solve_config()
    return build_model(cfg.model, in_dim=in_dim, hidden=cfg.hidden_dim,
                       out_dim=out_dim, rng=rng, depth_total=cfg.depth_total,
                       diffusivity=cfg.diffusivity, spacing_mode=cfg.spacing_mode,
                       boundary_mode=cfg.boundary_mode, tie_weights=cfg.tie_weights,
                       solve_t=solve, solve_depth=dataclasses.replace(solve))


def _fmt(x: float) -> str:
    return repr(float(x))


def run_training(cfg: RunConfig, out_dir: Path) -> dict:
    """Shared by cmd_train and cmd_bench; returns the final summary."""
    train_records = load_jsonl(cfg.train_data)
    val_records = load_jsonl(cfg.val_data) if cfg.val_data else []
    if not train_records:
        raise DataError(f"training data {cfg.train_data} is empty")
    if cfg.normalize_times:
        factor = normalize_times(train_records)
        for r in val_records:
            r.times = [t * factor for t in r.times]
    in_dim, out_dim = _infer_dims(train_records + val_records, cfg.task)
    model = _build_from_config(cfg, in_dim, out_dim)

    out_dir.mkdir(parents=True, exist_ok=True)
    frozen = cfg.to_dict()
    frozen["in_dim"] = in_dim
    frozen["out_dim"] = out_dim
    (out_dir / "run.json").write_text(json.dumps(frozen, indent=2, sort_keys=True) + "\n")

    sched = LrSchedule(base_lr=cfg.base_lr, gamma=cfg.lr_gamma, milestone=cfg.lr_milestone)
    opt = RmspropState(lr=cfg.base_lr)
    val_batches = (make_batches(val_records, cfg.batch_size, [cfg.seed, 999_983])
                   if val_records else [])
    last_val = {"loss": float("nan"), "metric": float("nan")}
    with (out_dir / "metrics.csv").open("w") as fh:
        fh.write("epoch,lr,train_loss,val_loss,val_metric,wall_seconds,nfe_mean\n")
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            opt.lr = lr_at_epoch(epoch, sched)
            batches = make_batches(train_records, cfg.batch_size, [cfg.seed, epoch])
            summary = train_epoch(model, batches, opt, task=cfg.task,
                                  grad_clip=cfg.grad_clip or None)
            if val_batches:
                report = evaluate(model, val_batches, cfg.task)
                last_val = {"loss": report.loss, "metric": report.metric}
            wall = time.perf_counter() - started if cfg.record_timing else 0.0
            fh.write(",".join([str(epoch), _fmt(opt.lr), _fmt(summary.loss),
                               _fmt(last_val["loss"]), _fmt(last_val["metric"]),
                               _fmt(wall), _fmt(summary.nfe_mean)]) + "\n")
            fh.flush()
            log.info("epoch %d: train_loss=%.6f val_metric=%.4f",
                     epoch, summary.loss, last_val["metric"])
    checkpoint_save(model, out_dir / "checkpoint.json")
    return {"train_loss": summary.loss, "val": last_val, "epochs": cfg.epochs}


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, _overrides(args))
    if not cfg.train_data:
        raise ConfigError("train_data is required")
    out_dir = Path(args.out_dir or cfg.out_dir)
    summary = run_training(cfg, out_dir)
    print(json.dumps(summary))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = checkpoint_load(args.checkpoint)
    records = load_jsonl(args.data)
    if not records:
        raise DataError(f"evaluation data {args.data} is empty")
    expected = model.encoder.in_dim
    got = records[0].width
    if got != expected:
        raise DataError(f"checkpoint expects input width {expected}, data has {got}")
    task = args.task
    batches = make_batches(records, args.batch_size, [0, 0])
    report = evaluate(model, batches, task)
    payload = report.to_dict(task)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


GRADCHECK_VARIANTS = {
    "gru_ode": [("gru_ode", {})],
    "cdr_nde": [("cdr_nde tied", {"tie_weights": True}),
                ("cdr_nde untied", {"tie_weights": False})],
    "cdr_nde_heat": [
        (f"cdr_nde_heat {sp}/{bd}", {"spacing_mode": sp, "boundary_mode": bd})
        for sp in ("uniform", "actual") for bd in ("zero_flux", "zero_ghost")],
}


def gradcheck_variant(kind: str, options: dict, *, k: int, hidden: int, d: int,
                      seed: int = 7, eps: float = 1e-5) -> float:
    """Max relative gradient error of a small model's loss on one random
    sequence."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.0, 2.0, k))
    while np.any(np.diff(times) <= 0):
        times = np.sort(rng.uniform(0.0, 2.0, k))
    rec = SequenceRecord(times=[float(t) for t in times],
                         inputs=[[float(v) for v in rng.standard_normal(d)] for _ in range(k)],
                         targets=[int(t) for t in rng.integers(0, 2, k)])
    model = build_model(kind, in_dim=d, hidden=hidden, out_dim=2, rng=rng,
                        solve_t=SolveConfig(), solve_depth=SolveConfig(), **options)

    def loss():
        return sequence_loss(model.forward(rec).outputs, rec.targets, "classification")

    return grad_check(loss, model.parameters(), eps=eps)


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.k > 3 or args.hidden > 4:
        raise ConfigError(f"gradcheck is limited to k <= 3 and hidden <= 4, "
                          f"got k={args.k}, hidden={args.hidden}")
    kinds = list(MODEL_KINDS) if args.model == "all" else [args.model]
    threshold = 1e-4
    failed = False
    for kind in kinds:
        if kind not in GRADCHECK_VARIANTS:
            raise ConfigError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
        for label, options in GRADCHECK_VARIANTS[kind]:
            err = gradcheck_variant(kind, options, k=args.k, hidden=args.hidden,
                                    d=args.d, seed=args.seed)
            status = "PASS" if err <= threshold else "FAIL"
            print(f"[{status}] {label}: max relative gradient error {err:.3e} "
                  f"(threshold {threshold:.0e})")
            failed = failed or err > threshold
    return 4 if failed else 0


def cmd_bench(args: argparse.Namespace) -> int:
    records = synth_classification(args.n, args.k, 3, args.seed)
    train_records, _, _ = split(records, (0.8, 0.1, 0.1), args.seed)
    rows = []
    for kind in args.models.split(","):
        kind = kind.strip()
        if kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model {kind!r} in --models")
        rng = np.random.default_rng(args.seed)
        model = build_model(kind, in_dim=3, hidden=args.hidden, out_dim=2, rng=rng,
                            solve_t=SolveConfig(), solve_depth=SolveConfig())
        opt = RmspropState()
        batches = make_batches(train_records, args.batch_size, [args.seed, 0])
        started = time.perf_counter()
        summary = train_epoch(model, batches, opt, task="classification")
        elapsed = time.perf_counter() - started
        rows.append((kind, elapsed, summary.nfe_mean))
        print(f"{kind}: {elapsed:.3f}s/epoch, nfe_mean={summary.nfe_mean:.1f}")
    out = Path(args.out)
    with out.open("w") as fh:
        fh.write("model,epoch_seconds,nfe_mean\n")
        for kind, elapsed, nfe in rows:
            fh.write(f"{kind},{_fmt(elapsed)},{_fmt(nfe)}\n")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.task == "classification":
        records = synth_classification(args.n, args.k, args.d, args.seed,
                                       noise_sd=args.noise_sd)
    else:
        records = synth_regression(args.n, args.k, args.seed)
    train, val, test = split(records, (0.6, 0.2, 0.2), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(train, out / "train.jsonl")
    save_jsonl(val, out / "val.jsonl")
    save_jsonl(test, out / "test.jsonl")
    summary = {"task": args.task, "n": args.n, "k": args.k, "seed": args.seed,
               "sizes": {"train": len(train), "val": len(val), "test": len(test)}}
    if args.task == "regression":
        summary["persistence_floor"] = persistence_floor(test)
    (out / "synth.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _overrides(args: argparse.Namespace) -> dict:
    keys = set(_FIELD_TYPES) - {"out_dir"}
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdrnde",
                                     description="continuous-depth recurrent models "
                                                 "for irregularly sampled sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", help="JSON config file; flags override its keys")
    p_train.add_argument("--out-dir", dest="out_dir")
    p_train.add_argument("--model", choices=MODEL_KINDS)
    p_train.add_argument("--task", choices=TASKS)
    p_train.add_argument("--train-data", dest="train_data")
    p_train.add_argument("--val-data", dest="val_data")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--base-lr", dest="base_lr", type=float)
    p_train.add_argument("--solver", choices=("euler", "dopri5"))
    p_train.add_argument("--euler-steps", dest="euler_steps", type=int)
    p_train.add_argument("--spacing-mode", dest="spacing_mode", choices=("uniform", "actual"))
    p_train.add_argument("--boundary-mode", dest="boundary_mode",
                         choices=("zero_flux", "zero_ghost"))
    p_train.add_argument("--timing", dest="record_timing", action="store_const", const=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--task", choices=TASKS, default="classification")
    p_eval.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p_eval.add_argument("--out", help="write the JSON report here too")
    p_eval.set_defaults(func=cmd_eval)

    p_grad = sub.add_parser("gradcheck", help="check model gradients at toy size")
    p_grad.add_argument("--model", choices=MODEL_KINDS + ("all",), default="all")
    p_grad.add_argument("--k", type=int, default=3, help="observations (max 3)")
    p_grad.add_argument("--hidden", type=int, default=4, help="hidden width (max 4)")
    p_grad.add_argument("--d", type=int, default=2, help="input width")
    p_grad.add_argument("--seed", type=int, default=7)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_bench = sub.add_parser("bench", help="time one training epoch per model")
    p_bench.add_argument("--models", default="cdr_nde,cdr_nde_heat")
    p_bench.add_argument("--n", type=int, default=48)
    p_bench.add_argument("--k", type=int, default=16)
    p_bench.add_argument("--hidden", type=int, default=32)
    p_bench.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default="bench.csv")
    p_bench.set_defaults(func=cmd_bench)

    p_synth = sub.add_parser("synth", help="generate synthetic train/val/test files")
    p_synth.add_argument("--task", choices=TASKS, default="classification")
    p_synth.add_argument("--n", type=int, default=500)
    p_synth.add_argument("--k", type=int, default=16)
    p_synth.add_argument("--d", type=int, default=3)
    p_synth.add_argument("--noise-sd", dest="noise_sd", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, SolverError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
