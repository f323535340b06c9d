import csv
import io
import json

import numpy as np
import pytest

from dedcgan import cli, container, harness

SMALL_TRAIN = ["--d-channels", "4,8,8,8", "--g-channels", "8,8,4,4", "--latent-dim", "8",
               "--cnn-channels", "4,8", "--epochs", "1", "--batch-size", "8"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--classes", "4", "--per-class", "8", "--seed", "1", "--out", str(root / "iq")]) == 0
    assert cli.main(["tfa", "--in", str(root / "iq"), "--height", "16", "--width", "16",
                     "--out", str(root / "spec")]) == 0
    assert cli.main(["train", "--data", str(root / "spec"), "--seed", "1", "--split-seed", "1",
                     "--out", str(root / "gan"), *SMALL_TRAIN]) == 0
    return root


def test_synth_outputs(pipeline):
    man = json.loads((pipeline / "iq" / "manifest.json").read_text())
    assert man["count"] == 32 and man["fs_hz"] == 500.0 and man["snr_db"] == 20.0
    arr = container.load_tensor(pipeline / "iq" / "samples" / "000000.dgt")
    assert arr.shape == (2, 500, 2) and arr.dtype == np.float32
    assert container.load_labels(pipeline / "iq" / "labels.u16").tolist() == [c for c in range(4) for _ in range(8)]


def test_tfa_outputs(pipeline):
    images = container.load_tensor(pipeline / "spec" / "images.dgt")
    assert images.shape == (32, 2, 16, 16) and images.dtype == np.float32


def test_eval_gen_bench(pipeline, capsys, tmp_path):
    ck = str(pipeline / "gan" / "checkpoint")
    assert cli.main(["eval", "--checkpoint", ck, "--data", str(pipeline / "spec"), "--split-seed", "1",
                     "--timing-passes", "3", "--out", str(tmp_path / "m.csv")]) == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "m.csv").read_text())))
    assert rows[0] == ["metric", "class", "value"] and rows[1][0] == "accuracy"
    assert cli.main(["gen", "--checkpoint", ck, "--count", "3", "--out", str(tmp_path / "g")]) == 0
    assert container.load_tensor(tmp_path / "g" / "samples.dgt").shape == (3, 2, 16, 16)
    assert harness.read_pgm(tmp_path / "g" / "sample_0002.pgm").shape == (16, 32)
    capsys.readouterr()
    assert cli.main(["bench", "--a", ck, "--b", ck, "--repeats", "5", "--warmup", "1"]) == 0
    assert capsys.readouterr().out.startswith("model,median_ms,p10_ms,p90_ms,params\n")


def test_stage_commands_match_experiment(pipeline, capsys):
    cfg = harness.ExperimentConfig(per_class=8, height=16, width=16, seeds=(1,), epochs=1, batch_size=8,
                                   timing_passes=1, preview_count=0, reference="gan",
                                   runs=({"name": "gan", "arch": "dedcgan", "d_channels": [4, 8, 8, 8],
                                          "g_channels": [8, 8, 4, 4], "latent_dim": 8, "cnn_channels": [4, 8]},))
    res = harness.run_experiment(cfg)
    capsys.readouterr()
    cli.main(["eval", "--checkpoint", str(pipeline / "gan" / "checkpoint"), "--data", str(pipeline / "spec"),
              "--split-seed", "1", "--timing-passes", "1"])
    acc = next(r for r in csv.reader(io.StringIO(capsys.readouterr().out)) if r[0] == "accuracy")[2]
    assert acc == f"{res.outcome('gan', 1).metrics.accuracy:.6f}"


def test_gradcheck_exit_codes(capsys):
    assert cli.main(["gradcheck", "--layer", "nope"]) == 2
    err = capsys.readouterr().err
    assert "deform-conv" in err and "selu" in err
    assert cli.main(["gradcheck", "--layer", "deform-conv", "--trials", "2"]) == 0
    out = capsys.readouterr().out
    assert "deform-conv: PASS" in out and "max rel err" in out


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 3, "seed": 4, "train": {"batch_size": 8}, "per_class": 99}))
    assert cli.main(["train", "--config", str(cfg), "--seed", "5", "--show-config"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert (shown["epochs"], shown["seed"], shown["batch_size"]) == (3, 5, 8)
    assert cli.main(["experiment", "--config", str(cfg), "--seeds", "0,1", "--show-config"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["per_class"] == 99 and shown["seeds"] == [0, 1]


def test_unknown_option(capsys):
    assert cli.main(["synth", "--bogus", "1"]) == 2
    assert "--per-class" in capsys.readouterr().err


def test_all_subcommands_registered():
    assert set(cli.COMMANDS) == {"synth", "tfa", "train", "eval", "gen", "bench", "gradcheck", "experiment"}


def test_experiment_command(tmp_path, capsys):
    runs = json.dumps([{"name": "cnn", "arch": "cnn", "cnn_channels": [4, 8]}])
    assert cli.main(["experiment", "--per-class", "4", "--height", "16", "--width", "16", "--epochs", "1",
                     "--seeds", "0", "--runs", runs, "--timing-passes", "1", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "results.csv").read_text()
    assert text.startswith(",".join(harness.CSV_COLUMNS))
    assert len(text.splitlines()) == 3
