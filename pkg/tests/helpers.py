"""Shared test fixtures: small random records with valid shapes."""

import numpy as np

from cdrnde.data import SequenceRecord


def make_record(k, d, seed, target_width=0):
    """Random record with k steps of width-d inputs.

    target_width=0 gives int class targets, otherwise float vectors.
    """
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.0, 5.0, k))
    times += np.arange(k) * 1e-3  # keep strictly increasing
    if target_width:
        targets = [[float(v) for v in rng.standard_normal(target_width)]
                   for _ in range(k)]
    else:
        targets = [int(v) for v in rng.integers(0, 2, k)]
    return SequenceRecord(
        times=[float(t) for t in times],
        inputs=[[float(v) for v in rng.standard_normal(d)] for _ in range(k)],
        targets=targets, id=f"r{seed}")
