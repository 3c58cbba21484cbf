"""Data layer: record validation, JSONL round trips with line-numbered
errors, batching with masks, splits, and the synthetic task generators."""

import json

import numpy as np
import pytest

from cdrnde.data import (SequenceRecord, load_jsonl, logistic_baseline_accuracy,
                         majority_accuracy, make_batches, normalize_times,
                         persistence_floor, save_jsonl, split,
                         synth_classification, synth_regression)
from cdrnde.errors import ConfigError, DataError
from helpers import make_record


def valid_record():
    return SequenceRecord(times=[0.0, 1.0, 2.5],
                          inputs=[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
                          targets=[0, 1, 1], id="a")


def test_validate_accepts_good_record():
    r = valid_record()
    r.validate()
    assert r.length == 3
    assert r.width == 2
    assert r.target_width is None


def test_validate_rejects_bad_records():
    r = valid_record()
    r.times = [0.0, 1.0, 1.0]
    with pytest.raises(DataError, match="strictly increasing"):
        r.validate()
    r = valid_record()
    r.times = [0.0, float("nan"), 2.0]
    with pytest.raises(DataError, match="non-finite time"):
        r.validate()
    r = valid_record()
    r.inputs[1] = [3.0]
    with pytest.raises(DataError, match="ragged"):
        r.validate()
    r = valid_record()
    r.inputs[0][0] = float("inf")
    with pytest.raises(DataError, match="non-finite input"):
        r.validate()
    r = valid_record()
    r.targets = [0, 1]
    with pytest.raises(DataError, match="lengths disagree"):
        r.validate()
    with pytest.raises(DataError, match="no steps"):
        SequenceRecord(times=[], inputs=[], targets=[]).validate()


def test_vector_targets_have_a_width():
    r = SequenceRecord(times=[0.0, 1.0], inputs=[[1.0], [2.0]],
                       targets=[[0.5, 0.5], [1.0, 1.0]])
    r.validate()
    assert r.target_width == 2
    r.targets[1] = [1.0]
    with pytest.raises(DataError, match="ragged targets"):
        r.validate()


def test_jsonl_round_trip(tmp_path):
    records = [make_record(4, 2, seed=s) for s in (1, 2, 3)]
    path = tmp_path / "data.jsonl"
    save_jsonl(records, path)
    loaded = load_jsonl(path)
    assert len(loaded) == 3
    for a, b in zip(records, loaded):
        assert a.id == b.id
        assert a.times == b.times
        assert a.inputs == b.inputs
        assert a.targets == b.targets


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"times": [0.0, 1.0], "inputs": [[1.0], [2.0]],
                       "targets": [0, 1], "id": "x"})
    path.write_text(good + "\n" + "{not json\n")
    with pytest.raises(DataError, match="line 2"):
        load_jsonl(path)
    path.write_text(good + "\n" + json.dumps({"times": [0.0]}) + "\n")
    with pytest.raises(DataError, match="line 2"):
        load_jsonl(path)


def test_load_rejects_unknown_keys(tmp_path):
    path = tmp_path / "extra.jsonl"
    path.write_text(json.dumps({"times": [0.0, 1.0], "inputs": [[1.0], [2.0]],
                                "targets": [0, 1], "labels": [0, 1]}) + "\n")
    with pytest.raises(DataError, match="unknown keys.*labels"):
        load_jsonl(path)


def test_load_rejects_mixed_widths(tmp_path):
    path = tmp_path / "mixed.jsonl"
    a = {"times": [0.0, 1.0], "inputs": [[1.0], [2.0]], "targets": [0, 1]}
    b = {"times": [0.0, 1.0], "inputs": [[1.0, 2.0], [2.0, 3.0]], "targets": [0, 1]}
    path.write_text(json.dumps(a) + "\n" + json.dumps(b) + "\n")
    with pytest.raises(DataError, match="disagree on input width"):
        load_jsonl(path)


def test_load_missing_file():
    with pytest.raises(DataError, match="no such data file"):
        load_jsonl("/nonexistent/nowhere.jsonl")


def test_load_empty_file_warns_not_raises(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level("WARNING"):
        assert load_jsonl(path) == []
    assert "contained no records" in caplog.text


def test_batches_pad_and_mask():
    records = [make_record(k, 2, seed=k) for k in (2, 5, 3, 4)]
    batches = make_batches(records, batch_size=2, seed=0)
    assert len(batches) == 2
    assert sum(b.size for b in batches) == 4
    seen = set()
    for b in batches:
        k_max = b.times.shape[1]
        assert b.inputs.shape == (b.size, k_max, 2)
        for i in range(b.size):
            rec = b.sequence(i)
            rec.validate()
            seen.add(rec.id)
            k = rec.length
            assert bool(b.mask[i, :k].all())
            assert not b.mask[i, k:].any()
    assert seen == {r.id for r in records}


def test_batch_shuffle_is_seeded():
    records = [make_record(3, 2, seed=s) for s in range(8)]
    ids1 = [b.ids for b in make_batches(records, 3, seed=7)]
    ids2 = [b.ids for b in make_batches(records, 3, seed=7)]
    ids3 = [b.ids for b in make_batches(records, 3, seed=8)]
    assert ids1 == ids2
    assert ids1 != ids3
    with pytest.raises(ConfigError):
        make_batches(records, 0, seed=0)


def test_split_sizes_and_disjointness():
    records = [make_record(3, 2, seed=s) for s in range(10)]
    train, val, test = split(records, (0.6, 0.2, 0.2), seed=1)
    assert (len(train), len(val), len(test)) == (6, 2, 2)
    ids = [r.id for part in (train, val, test) for r in part]
    assert sorted(ids) == sorted(r.id for r in records)
    # remainders go to train
    train, val, test = split(records[:7], (0.6, 0.2, 0.2), seed=1)
    assert (len(train), len(val), len(test)) == (5, 1, 1)
    with pytest.raises(ConfigError):
        split(records, (0.5, 0.5, 0.5), seed=0)


def test_normalize_times_sets_mean_gap_to_one():
    records = [make_record(4, 2, seed=s) for s in (1, 2)]
    factor = normalize_times(records)
    gaps = [b - a for r in records for a, b in zip(r.times, r.times[1:])]
    assert np.mean(gaps) == pytest.approx(1.0, abs=1e-12)
    assert factor > 0
    for r in records:
        r.validate()


def test_synth_classification_shape_and_semantics():
    records = synth_classification(6, 10, 4, seed=3)
    assert len(records) == 6
    widths = {r.width for r in records}
    assert widths == {4}
    for r in records:
        r.validate()
        assert r.length == 10
        assert set(map(int, r.targets)) <= {0, 1}
        assert all(0.0 <= t <= 10.0 for t in r.times)
        # gap features are consistent with the times
        gaps = np.diff(r.times)
        for i in range(1, r.length):
            assert r.inputs[i][1] == pytest.approx(gaps[i - 1], abs=1e-12)
        for i in range(r.length - 1):
            assert r.inputs[i][2] == pytest.approx(gaps[i], abs=1e-12)
    again = synth_classification(6, 10, 4, seed=3)
    assert all(a.inputs == b.inputs and a.targets == b.targets
               for a, b in zip(records, again))
    assert records[0].id == "clf-3-0"
    with pytest.raises(ConfigError):
        synth_classification(0, 10, 4, seed=3)


def test_synth_classification_is_noisy_but_learnable_in_principle():
    records = synth_classification(50, 12, 3, seed=5, noise_sd=1.0)
    # sign of the noisy observation alone should NOT match the label
    # perfectly; the clean latent defines it
    agree = [int(r.inputs[i][0] > 0) == int(r.targets[i])
             for r in records for i in range(r.length)]
    assert 0.6 < np.mean(agree) < 0.95


def test_synth_regression_shape_and_semantics():
    records = synth_regression(5, 8, seed=4, drop_rate=0.2)
    assert len(records) == 5
    for r in records:
        r.validate()
        assert r.length == 8
        assert r.width == 3
        assert r.target_width == 2
        # the gap feature matches the distance to the next kept time,
        # and position/velocity evolve continuously
        for i in range(r.length - 1):
            assert r.inputs[i + 1][0] == pytest.approx(r.targets[i][0], abs=1e-12)
            assert r.inputs[i + 1][1] == pytest.approx(r.targets[i][1], abs=1e-12)
            assert r.inputs[i][2] == pytest.approx(r.times[i + 1] - r.times[i], abs=1e-12)
    with pytest.raises(ConfigError):
        synth_regression(5, 8, seed=4, drop_rate=1.0)


def test_synth_regression_dropping_creates_irregular_gaps():
    records = synth_regression(20, 16, seed=6, drop_rate=0.3, grid_step=0.5)
    gaps = {round(b - a, 9) for r in records for a, b in zip(r.times, r.times[1:])}
    assert len(gaps) > 1  # some doubled or tripled gaps from drops
    assert min(gaps) == pytest.approx(0.5)


def test_persistence_floor_hand_value():
    r = SequenceRecord(times=[0.0, 1.0], inputs=[[1.0, 0.0, 0.5], [2.0, 1.0, 0.5]],
                       targets=[[2.0, 1.0], [2.0, 2.0]])
    # step 0: target (2,1) vs current (1,0): mean((1,1)^2)=1
    # step 1: target (2,2) vs current (2,1): mean((0,1)^2)=0.5
    assert persistence_floor([r]) == pytest.approx(0.75)
    with pytest.raises(ConfigError):
        persistence_floor([valid_record()])


def test_persistence_floor_on_generated_task_is_positive():
    records = synth_regression(10, 8, seed=7)
    floor = persistence_floor(records)
    assert floor > 0.01


def test_majority_accuracy():
    train = [SequenceRecord(times=[0.0, 1.0], inputs=[[0.0], [0.0]],
                            targets=[1, 1]),
             SequenceRecord(times=[0.0, 1.0], inputs=[[0.0], [0.0]],
                            targets=[1, 0])]
    test = [SequenceRecord(times=[0.0, 1.0, 2.0], inputs=[[0.0]] * 3,
                           targets=[1, 0, 1])]
    assert majority_accuracy(train, test) == pytest.approx(2.0 / 3.0)


def test_logistic_baseline_runs_and_beats_chance_on_easy_data():
    records = synth_classification(40, 10, 3, seed=8, noise_sd=0.1)
    train, test = records[:30], records[30:]
    acc = logistic_baseline_accuracy(train, test)
    assert 0.5 < acc <= 1.0
