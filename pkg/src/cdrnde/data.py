"""Datasets: JSONL loading, batching with masks, splits, synthetic tasks.

Times in a record are absolute; the solvers consume the gaps between
them. No rescaling happens unless `normalize_times` is applied
explicitly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


@dataclass
class SequenceRecord:
    """One irregularly sampled sequence.

    `targets` holds one int class per step, or one float vector per step
    for regression.
    """

    times: list[float]
    inputs: list[list[float]]
    targets: list
    id: str = ""

    @property
    def length(self) -> int:
        return len(self.times)

    @property
    def width(self) -> int:
        return len(self.inputs[0]) if self.inputs else 0

    def validate(self) -> None:
        k = len(self.times)
        if k == 0:
            raise DataError("record has no steps")
        if len(self.inputs) != k or len(self.targets) != k:
            raise DataError(
                f"lengths disagree: {k} times, {len(self.inputs)} inputs, "
                f"{len(self.targets)} targets")
        for t in self.times:
            if not np.isfinite(t):
                raise DataError(f"non-finite time {t!r}")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise DataError(f"times not strictly increasing at {a!r} -> {b!r}")
        w = self.width
        for row in self.inputs:
            if len(row) != w:
                raise DataError(f"ragged inputs: widths {w} and {len(row)}")
            for v in row:
                if not np.isfinite(v):
                    raise DataError(f"non-finite input value {v!r}")
        if self.target_width is not None:
            for row in self.targets:
                if len(row) != self.target_width:
                    raise DataError(
                        f"ragged targets: widths {self.target_width} and {len(row)}")

    @property
    def target_width(self) -> int | None:
        """Vector-target width, or None for int class targets."""
        first = self.targets[0]
        return len(first) if isinstance(first, (list, tuple)) else None


def load_jsonl(path: str | Path) -> list[SequenceRecord]:
    """Read one record per line; errors name the offending line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such data file: {path}")
    records: list[SequenceRecord] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path} line {lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(obj, dict):
                raise DataError(f"{path} line {lineno}: expected an object")
            unknown = set(obj) - {"times", "inputs", "targets", "id"}
            if unknown:
                raise DataError(f"{path} line {lineno}: unknown keys {sorted(unknown)}")
            try:
                rec = SequenceRecord(
                    times=[float(t) for t in obj["times"]],
                    inputs=[[float(v) for v in row] for row in obj["inputs"]],
                    targets=obj["targets"],
                    id=str(obj.get("id", f"line{lineno}")))
                rec.validate()
            except DataError as e:
                raise DataError(f"{path} line {lineno}: {e}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path} line {lineno}: malformed record ({e})") from e
            records.append(rec)
    if not records:
        log.warning("%s contained no records", path)
    if len({r.width for r in records}) > 1:
        raise DataError(f"{path}: records disagree on input width")
    return records


def save_jsonl(records: list[SequenceRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(
                {"id": r.id, "times": r.times, "inputs": r.inputs, "targets": r.targets},
                sort_keys=True) + "\n")


@dataclass
class Batch:
    """Sequences padded to the batch's longest length, with a step mask.

    Padding positions are never fed to a model; `mask` has exactly one
    True per real step.
    """

    times: np.ndarray    # (b, k_max)
    inputs: np.ndarray   # (b, k_max, d)
    targets: list        # per sequence, the unpadded target list
    mask: np.ndarray     # (b, k_max) bool
    ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.times.shape[0]

    def sequence(self, b: int) -> SequenceRecord:
        """Reconstruct sequence b from the padded arrays."""
        k = int(self.mask[b].sum())
        return SequenceRecord(
            times=[float(t) for t in self.times[b, :k]],
            inputs=[[float(v) for v in row] for row in self.inputs[b, :k]],
            targets=self.targets[b],
            id=self.ids[b] if self.ids else "")


def make_batches(records: list[SequenceRecord], batch_size: int, seed) -> list[Batch]:
    """Shuffle with the given seed, then chunk and pad each chunk."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    batches = []
    for lo in range(0, len(shuffled), batch_size):
        chunk = shuffled[lo:lo + batch_size]
        k_max = max(r.length for r in chunk)
        d = chunk[0].width
        times = np.zeros((len(chunk), k_max))
        inputs = np.zeros((len(chunk), k_max, d))
        mask = np.zeros((len(chunk), k_max), dtype=bool)
        for b, r in enumerate(chunk):
            times[b, :r.length] = r.times
            inputs[b, :r.length] = r.inputs
            mask[b, :r.length] = True
        batches.append(Batch(times=times, inputs=inputs,
                             targets=[r.targets for r in chunk], mask=mask,
                             ids=[r.id for r in chunk]))
    return batches


def split(records: list[SequenceRecord], ratios: tuple[float, float, float], seed):
    """Shuffled train/val/test split; rounding remainders go to train."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be positive and sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(records))
    shuffled = [records[i] for i in order]
    n = len(shuffled)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


def normalize_times(records: list[SequenceRecord]) -> float:
    """Rescale all times in place so the mean gap is 1; returns the factor."""
    gaps = [b - a for r in records for a, b in zip(r.times, r.times[1:])]
    if not gaps:
        return 1.0
    factor = 1.0 / float(np.mean(gaps))
    for r in records:
        r.times = [t * factor for t in r.times]
    return factor


def synth_classification(n_seqs: int, k: int, d: int, seed,
                         noise_sd: float = 1.0) -> list[SequenceRecord]:
    """Noisy sine-phase task: is the latent wave positive right now?

    A latent s(t) = sin(omega t + phi) with per-sequence omega in
    [0.5, 2] is observed at sorted uniform times on [0, 10]. Inputs carry
    the noisy observation plus gap features; the step label is
    1 when s(t_i) > 0. The noise is a per-sequence random offset plus
    per-step white noise (both scaled by noise_sd): a step-isolated
    readout cannot tell the offset from the signal, while pooling the
    whole sequence estimates and removes it.
    """
    if d < 1 or k < 2 or n_seqs < 1:
        raise ConfigError(f"bad synth_classification dims n={n_seqs}, k={k}, d={d}")
    rng = np.random.default_rng(seed)
    records = []
    for idx in range(n_seqs):
        omega = rng.uniform(0.5, 2.0)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        while True:
            times = np.sort(rng.uniform(0.0, 10.0, k))
            if np.all(np.diff(times) > 0):
                break
        latent = np.sin(omega * times + phi)
        offset = 1.1 * rng.standard_normal()
        noisy = latent + noise_sd * (offset + 0.4 * rng.standard_normal(k))
        gap_prev = np.concatenate([[0.0], np.diff(times)])
        gap_next = np.concatenate([np.diff(times), [0.0]])
        feats = [noisy, gap_prev, gap_next]
        while len(feats) < d:
            feats.append(rng.standard_normal(k))
        inputs = np.stack(feats[:d], axis=1)
        labels = (latent > 0).astype(int)
        records.append(SequenceRecord(
            times=[float(t) for t in times],
            inputs=[[float(v) for v in row] for row in inputs],
            targets=[int(v) for v in labels],
            id=f"clf-{seed}-{idx}"))
    return records


def synth_regression(n_seqs: int, k: int, seed, drop_rate: float = 0.1,
                     damping: float = 0.1, grid_step: float = 0.5) -> list[SequenceRecord]:
    """Forecast task on a damped oscillator with randomly dropped grid steps.

    The oscillator state (position, velocity-like quadrature) is sampled
    on a regular grid; `drop_rate` of the grid points are removed
    uniformly at random. Each kept step's target is the next kept
    observation's state, and the gap to that next step rides along as an
    input feature.
    """
    if not (0.0 <= drop_rate < 1.0) or k < 2 or n_seqs < 1:
        raise ConfigError(f"bad synth_regression dims n={n_seqs}, k={k}, drop={drop_rate}")
    rng = np.random.default_rng(seed)
    records = []
    for idx in range(n_seqs):
        amp = rng.uniform(0.5, 1.5)
        omega = rng.uniform(0.8, 1.5)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        m = int(np.ceil((k + 1) / (1.0 - drop_rate))) + 2
        n_drop = int(round(drop_rate * m))
        dropped = set(rng.choice(m, size=n_drop, replace=False)) if n_drop else set()
        kept = [i for i in range(m) if i not in dropped]
        if len(kept) < k + 1:
            kept = list(range(k + 1))
        kept = kept[:k + 1]
        t = np.array(kept, dtype=float) * grid_step
        decay = amp * np.exp(-damping * t)
        state = np.stack([decay * np.cos(omega * t + phi),
                          decay * np.sin(omega * t + phi)], axis=1)
        gap_next = np.diff(t)
        inputs = np.concatenate([state[:-1], gap_next[:, None]], axis=1)
        targets = state[1:]
        records.append(SequenceRecord(
            times=[float(v) for v in t[:-1]],
            inputs=[[float(v) for v in row] for row in inputs],
            targets=[[float(v) for v in row] for row in targets],
            id=f"reg-{seed}-{idx}"))
    return records


def persistence_floor(records: list[SequenceRecord]) -> float:
    """MSE of predicting the current state for the next one.

    The state occupies the leading target-width input columns; this is
    the floor a forecaster has to beat.
    """
    total = 0.0
    count = 0
    for r in records:
        width = r.target_width
        if width is None:
            raise ConfigError("persistence floor needs vector targets")
        for x, y in zip(r.inputs, r.targets):
            diff = np.asarray(y) - np.asarray(x[:width])
            total += float(np.mean(diff ** 2))
            count += 1
    return total / max(count, 1)


def logistic_baseline_accuracy(train: list[SequenceRecord],
                               test: list[SequenceRecord], seed: int = 0) -> float:
    """Accuracy of logistic regression on raw per-step (input, gap) features.

    This oracle sees each step in isolation, so it cannot smooth across
    the sequence; it marks the bar a temporal model has to clear.
    """
    from sklearn.linear_model import LogisticRegression

    def flatten(recs):
        xs, ys = [], []
        for r in recs:
            gaps = np.concatenate([[0.0], np.diff(r.times)])
            for i in range(r.length):
                xs.append(list(r.inputs[i]) + [gaps[i]])
                ys.append(int(r.targets[i]))
        return np.asarray(xs), np.asarray(ys)

    xtr, ytr = flatten(train)
    xte, yte = flatten(test)
    clf = LogisticRegression(max_iter=1000, random_state=seed)
    clf.fit(xtr, ytr)
    return float(np.mean(clf.predict(xte) == yte))


def majority_accuracy(train: list[SequenceRecord], test: list[SequenceRecord]) -> float:
    """Accuracy of always predicting the training majority class."""
    counts: dict[int, int] = {}
    for r in train:
        for t in r.targets:
            counts[int(t)] = counts.get(int(t), 0) + 1
    best = max(counts, key=counts.get)
    steps = [int(t) for r in test for t in r.targets]
    return float(np.mean([t == best for t in steps]))
