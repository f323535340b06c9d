import csv
import io

import numpy as np
import pytest

from dedcgan import harness, models
from dedcgan.exceptions import CheckpointMismatch

TINY_RUNS = (
    {"name": "relu-bn", "arch": "dedcgan", "activation": "relu-bn", "d_channels": [4, 8, 8, 8],
     "g_channels": [8, 8, 4, 4], "latent_dim": 8},
    {"name": "selu-bn", "arch": "dedcgan", "activation": "selu-bn", "d_channels": [4, 8, 8, 8],
     "g_channels": [8, 8, 4, 4], "latent_dim": 8},
    {"name": "selu", "arch": "dedcgan", "activation": "selu", "d_channels": [4, 8, 8, 8],
     "g_channels": [8, 8, 4, 4], "latent_dim": 8},
)


def tiny_config(**kw):
    base = dict(per_class=8, height=16, width=16, epochs=1, batch_size=8, timing_passes=3,
                preview_count=2, runs=TINY_RUNS, reference="relu-bn")
    base.update(kw)
    return harness.ExperimentConfig(**base)


@pytest.fixture(scope="module")
def table2(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    return harness.run_experiment(tiny_config(), out), out


def test_table2_csv_shape(table2):
    res, out = table2
    rows = list(csv.DictReader(io.StringIO(res.csv_text)))
    assert [r["row"] for r in rows].count("run") == 9
    assert [r["row"] for r in rows].count("summary") == 3
    assert rows[0].keys() == set(harness.CSV_COLUMNS) or list(rows[0]) == harness.CSV_COLUMNS
    assert len({r["config_hash"] for r in rows}) == 1
    assert (out / "results.csv").read_text() == res.csv_text
    summary = {r["axis"]: r for r in rows if r["row"] == "summary"}
    for axis in ("relu-bn", "selu-bn", "selu"):
        assert float(summary[axis]["accuracy"]) == pytest.approx(res.median(axis), abs=1e-6)
        assert float(summary[axis]["delta"]) == pytest.approx(res.median(axis) - res.median("relu-bn"), abs=1e-6)


def test_rows_in_deterministic_order(table2):
    res, _ = table2
    keys = [(r[1], r[2]) for r in csv.reader(io.StringIO(res.csv_text))][1:]
    assert keys == [(a, s) for a in ("relu-bn", "selu-bn", "selu") for s in ("0", "1", "2", "median")]


def test_run_artifacts(table2):
    _, out = table2
    run = out / "runs" / "selu-seed1"
    assert (run / "checkpoint" / "manifest.json").is_file()
    pgms = sorted((run / "generated").glob("*.pgm"))
    assert len(pgms) == 2
    assert pgms[0].read_bytes().startswith(b"P5\n32 16\n255\n")


def test_rerun_identical_except_timing(table2, tmp_path):
    res, out = table2
    again = harness.run_experiment(tiny_config(), tmp_path)
    assert harness.strip_timing(again.csv_text) == harness.strip_timing(res.csv_text)
    a = (out / "runs" / "selu-bn-seed2" / "checkpoint" / "tensors" / "disc.conv1.offset.weight.dgt").read_bytes()
    b = (tmp_path / "runs" / "selu-bn-seed2" / "checkpoint" / "tensors" / "disc.conv1.offset.weight.dgt").read_bytes()
    assert a == b


def test_config_hash_tracks_config():
    assert tiny_config().hash() == tiny_config().hash()
    assert tiny_config().hash() != tiny_config(epochs=2).hash()


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(splits=(0.5, 0.6, 0.1))
    with pytest.raises(ValueError):
        tiny_config(seeds=())
    with pytest.raises(ValueError):
        tiny_config(runs=({"name": "x", "arch": "svm"},))


def test_stage_failure_is_annotated():
    cfg = tiny_config(runs=({"name": "bad", "arch": "dedcgan", "d_channels": [4, 8, 8, 8],
                             "g_channels": [8, 8, 4, 4], "lr_d": 1e12, "lr_g": 1e12, "latent_dim": 8},),
                      seeds=(0,), epochs=3, reference="bad")
    with pytest.warns(RuntimeWarning), pytest.raises(Exception, match=r"\[train axis=bad seed=0\]"):
        harness.run_experiment(cfg)


def test_split_indices():
    labels = np.repeat(np.arange(4), 100)
    tr, va, te = harness.split_indices(labels, (0.25, 0.25, 0.5), seed=3)
    assert (len(tr), len(va), len(te)) == (100, 100, 200)
    assert np.all(np.bincount(labels[tr]) == 25)
    assert len(set(tr) | set(va) | set(te)) == 400
    again = harness.split_indices(labels, (0.25, 0.25, 0.5), seed=3)
    assert all(np.array_equal(a, b) for a, b in zip((tr, va, te), again))


def test_pgm_encoding(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    data = harness.to_pgm_bytes(img)
    assert data[:11] == b"P5\n2 2\n255\n"
    assert list(data[11:]) == [0, 64, 128, 255]
    (tmp_path / "x.pgm").write_bytes(data)
    np.testing.assert_array_equal(harness.read_pgm(tmp_path / "x.pgm"), [[0, 64], [128, 255]])
    assert set(harness.to_pgm_bytes(np.ones((3, 3)))[11:]) == {0}


def test_bench_contract():
    m = models.Discriminator(4, kernel="standard")
    totals = []
    for reps in (5, 20, 60):
        res = harness.bench(m, m, repeats=reps, warmup=10)
        assert all(len(t) == reps for t in res.times_ms.values())
        totals.append(sum(t.sum() for t in res.times_ms.values()))
    assert totals == sorted(totals)
    lines = res.csv().splitlines()
    assert lines[0] == "model,median_ms,p10_ms,p90_ms,params"
    assert len(lines) == 3
    s = res.summary(res.names[0])
    assert s["p10_ms"] <= s["median_ms"] <= s["p90_ms"]


def test_bench_rejects_incompatible_inputs():
    with pytest.raises(CheckpointMismatch):
        harness.bench(models.Discriminator(4, image_size=64), models.BaselineCNN(4, image_size=32), 2, 1)
