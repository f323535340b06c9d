"""Command-line entry point.

Every subcommand reads its settings from built-in defaults, then an optional
JSON file given with ``--config``, then ``--key value`` flags.  Keys use
underscores or dashes interchangeably.  A JSON object stored under the
subcommand's own name (e.g. ``{"train": {...}}``) overrides top-level keys.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import MISSING, asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import gradcheck, harness, radar, tfa, training
from .checkpoint import load_checkpoint
from .exceptions import DeDCGANError, UnknownLayer


@dataclass
class SynthArgs:
    classes: int = 4
    per_class: int = 200
    fs: float = 500.0
    snr_db: float = 20.0
    speed: float = 1.0
    speed_jitter: float = 0.1
    seed: int = 0
    out: str = "data/iq"


@dataclass
class TfaArgs:
    input: str = "data/iq"
    method: str = "stft"
    window: int = 64
    hop: int = 4
    window_fn: str = "hann"
    height: int = 64
    width: int = 64
    w0: float = 6.0
    fmin: float = 2.0
    fmax: float = 60.0
    n_scales: int = 64
    beta: float = tfa.BETA
    out: str = "data/spec"


def _train_fields():
    return {f.name: f for f in fields(training.TrainConfig)}


@dataclass
class TrainArgs:
    data: str = "data/spec"
    arch: str = "dedcgan"
    splits: tuple = (0.25, 0.25, 0.5)
    split_seed: int = 0
    out: str = "runs/model"
    preview_count: int = 8
    # TrainConfig fields are merged in at parse time


@dataclass
class EvalArgs:
    checkpoint: str = "runs/model/checkpoint"
    data: str = "data/spec"
    subset: str = "test"
    splits: tuple = (0.25, 0.25, 0.5)
    split_seed: int = 0
    timing_passes: int = 100
    out: str = ""


@dataclass
class GenArgs:
    checkpoint: str = "runs/model/checkpoint"
    count: int = 16
    seed: int = 0
    out: str = "runs/generated"


@dataclass
class BenchArgs:
    a: str = ""
    b: str = ""
    repeats: int = 100
    warmup: int = 10
    seed: int = 0
    out: str = ""


@dataclass
class GradcheckArgs:
    layer: str = "all"
    trials: int = 20
    eps: float = 1e-5
    tol: float = -1.0   # negative: per-layer default
    seed: int = 0


@dataclass
class ExperimentArgs:
    out: str = "runs/experiment"
    axes: tuple = ()


ALIASES = {"in": "input", "window_len": "window"}


# ------------------------------------------------------------- parsing


def _coerce(value: str, default, name: str):
    if isinstance(default, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"--{name}: expected a boolean, got {value!r}")
    if isinstance(default, (tuple, list)):
        text = value.strip()
        if text.startswith("["):
            return tuple(json.loads(text))
        items = [v for v in text.split(",") if v != ""]
        if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
            kind = type(default[0])
            if kind is int and any("." in v for v in items):
                kind = float
            return tuple(kind(v) for v in items)
        return tuple(items)
    if default is None:
        try:
            return json.loads(value)
        except json.JSONDecodeError:
            return value
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def _defaults(spec) -> dict:
    out = {}
    for f in fields(spec):
        if f.default is not MISSING:
            out[f.name] = f.default
        elif f.default_factory is not MISSING:
            out[f.name] = f.default_factory()
    return out


def _parse_overrides(tokens: list[str], defaults: dict) -> dict:
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        key = key.replace("-", "_")
        key = ALIASES.get(key, key)
        if key not in defaults:
            raise ValueError(f"unknown option --{tok[2:].partition('=')[0]}; valid: "
                             + ", ".join("--" + k.replace("_", "-") for k in sorted(defaults)))
        if not eq:
            if i + 1 >= len(tokens):
                if isinstance(defaults[key], bool):
                    val = "true"
                else:
                    raise ValueError(f"--{key} needs a value")
            elif isinstance(defaults[key], bool) and tokens[i + 1].startswith("--"):
                val = "true"
            else:
                i += 1
                val = tokens[i]
        out[key] = _coerce(val, defaults[key], key)
        i += 1
    return out


def resolve(command: str, defaults: dict, config_path: str | None, tokens: list[str]) -> dict:
    settings = dict(defaults)
    if config_path:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
        merged = {k: v for k, v in raw.items() if not isinstance(v, dict) or k not in COMMANDS}
        merged.update(raw.get(command, {}) if isinstance(raw.get(command), dict) else {})
        for k, v in merged.items():
            k = ALIASES.get(k.replace("-", "_"), k.replace("-", "_"))
            if k in settings:
                settings[k] = tuple(v) if isinstance(settings[k], tuple) and isinstance(v, list) else v
    settings.update(_parse_overrides(tokens, defaults))
    return settings


# ------------------------------------------------------------- commands


def _print(msg: str) -> None:
    print(msg, flush=True)


def cmd_synth(a: dict) -> int:
    ds = radar.make_dataset(a["classes"], a["per_class"], a["fs"], a["snr_db"], a["seed"], a["speed"],
                            a["speed_jitter"])
    radar.save_dataset(ds, a["out"])
    _print(f"wrote {len(ds)} frames ({len(ds.classes)} classes) to {a['out']}")
    return 0


def cmd_tfa(a: dict) -> int:
    ds = radar.load_dataset(a["input"])
    cfg = tfa.TFAConfig(a["method"], a["window"], a["hop"], a["window_fn"], a["w0"], a["fmin"], a["fmax"],
                        a["n_scales"], a["height"], a["width"], a["beta"])
    images, fax, tax = tfa.transform_array(np.stack([f.channels for f in ds.frames]), ds.fs_hz, cfg)
    specs = [tfa.Spectrogram(img, fax, tax, cfg.method, f.label) for img, f in zip(images, ds.frames)]
    tfa.save_spectrograms(specs, a["out"], ds.class_names,
                          {"tfa": asdict(cfg), "source": str(a["input"]), "seed": ds.seed})
    _print(f"wrote {len(specs)} {cfg.method} images {list(images.shape[1:])} to {a['out']}")
    return 0


def _load_split(data: str, subset: str, splits, split_seed: int):
    images, labels, man = tfa.load_spectrograms(data)
    parts = dict(zip(("train", "val", "test"), harness.split_indices(labels, splits, split_seed)))
    if subset == "all":
        idx = np.arange(labels.size)
    elif subset in parts:
        idx = parts[subset]
    else:
        raise ValueError(f"subset must be train, val, test or all, got {subset!r}")
    n_classes = len(man["class_names"]) if man.get("class_names") else int(labels.max()) + 1
    return images[idx], labels[idx].astype(np.int64), n_classes, man


def cmd_train(a: dict) -> int:
    images, labels, k, _ = _load_split(a["data"], "train", a["splits"], a["split_seed"])
    cfg = training.TrainConfig.from_dict({n: a[n] for n in _train_fields()})
    if a["arch"] == "dedcgan":
        res = training.train_gan(images, labels, cfg, k)
    elif a["arch"] == "cnn":
        res = training.train_cnn(images, labels, cfg, k)
    else:
        raise ValueError(f"arch must be dedcgan or cnn, got {a['arch']!r}")
    harness.save_run(a["out"], res, a["preview_count"], cfg.seed)
    last = res.history[-1] if res.history else {}
    _print(f"trained {a['arch']} for {cfg.epochs} epochs on {len(labels)} samples; "
           f"final train accuracy {last.get('train_accuracy', float('nan')):.4f}; "
           f"checkpoint in {Path(a['out']) / 'checkpoint'}")
    return 0


def cmd_eval(a: dict) -> int:
    ckpt = load_checkpoint(a["checkpoint"])
    model = harness.classifier_of(ckpt)
    images, labels, _, _ = _load_split(a["data"], a["subset"], a["splits"], a["split_seed"])
    m = training.evaluate(model, images, labels, a["timing_passes"], ckpt.history)
    text = metrics_csv(m)
    if a["out"]:
        Path(a["out"]).parent.mkdir(parents=True, exist_ok=True)
        Path(a["out"]).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def metrics_csv(m: training.Metrics) -> str:
    lines = ["metric,class,value", f"accuracy,,{m.accuracy:.6f}"]
    lines += [f"class_accuracy,{i},{v:.6f}" for i, v in enumerate(m.per_class_accuracy)]
    lines += [f"confusion,{i},{';'.join(str(c) for c in row)}" for i, row in enumerate(m.confusion)]
    lines += [f"params,,{m.params}", f"median_ms,,{m.median_ms:.4f}"]
    return "\n".join(lines) + "\n"


def cmd_gen(a: dict) -> int:
    ckpt = load_checkpoint(a["checkpoint"])
    if "gen" not in ckpt.models:
        raise ValueError(f"{a['checkpoint']} holds no generator")
    samples = training.generate(ckpt["gen"], a["count"], a["seed"])
    paths = harness.write_samples(a["out"], samples)
    _print(f"wrote {len(paths)} samples and PGM previews to {a['out']}")
    return 0


def cmd_bench(a: dict) -> int:
    if not a["a"] or not a["b"]:
        raise ValueError("bench needs --a CHECKPOINT and --b CHECKPOINT")
    res = harness.bench_checkpoints(a["a"], a["b"], a["repeats"], a["warmup"], a["seed"])
    text = res.csv()
    if a["out"]:
        Path(a["out"]).parent.mkdir(parents=True, exist_ok=True)
        Path(a["out"]).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(a: dict) -> int:
    names = gradcheck.layers() if a["layer"] == "all" else [a["layer"]]
    ok = True
    for name in names:
        rep = gradcheck.run(name, a["trials"], a["eps"], None if a["tol"] < 0 else a["tol"], a["seed"])
        _print("\n".join(rep.lines()))
        ok &= rep.passed
    return 0 if ok else 1


def cmd_experiment(a: dict) -> int:
    cfg = harness.ExperimentConfig.from_dict(a)
    res = harness.run_experiment(cfg, a["out"], set(a["axes"]) if a["axes"] else None, log=_print)
    sys.stdout.write(res.csv_text)
    return 0


COMMANDS = {
    "synth": (SynthArgs, cmd_synth, "synthesize a labelled I/Q gesture dataset"),
    "tfa": (TfaArgs, cmd_tfa, "turn a dataset into STFT or CWT images"),
    "train": (TrainArgs, cmd_train, "train the GAN classifier or the CNN baseline"),
    "eval": (EvalArgs, cmd_eval, "evaluate a checkpoint on a data split"),
    "gen": (GenArgs, cmd_gen, "sample the generator and dump DGT1 + PGM previews"),
    "bench": (BenchArgs, cmd_bench, "time single-sample inference of two checkpoints"),
    "gradcheck": (GradcheckArgs, cmd_gradcheck, "finite-difference gradient checks"),
    "experiment": (ExperimentArgs, cmd_experiment, "run a crossed experiment and write a CSV"),
}


def defaults_for(command: str) -> dict:
    spec = COMMANDS[command][0]
    d = _defaults(spec)
    if command == "train":
        d.update({k: v for k, v in training.TrainConfig().to_dict().items()})
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    if command == "experiment":
        ex = harness.ExperimentConfig()
        d.update({f.name: getattr(ex, f.name) for f in fields(ex)})
    return d


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dedcgan", description="Microwave gesture recognition pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, _, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_ + ". Any setting can be given as --key value.")
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--show-config", action="store_true", help="print the resolved settings and exit")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns, rest = parser.parse_known_args(argv)
    cmd = ns.command
    defaults = defaults_for(cmd)
    try:
        settings = resolve(cmd, defaults, ns.config, rest)
    except UnknownLayer as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if ns.show_config:
        print(json.dumps(settings, indent=2, sort_keys=True, default=list))
        return 0
    if cmd == "gradcheck" and settings["layer"] != "all" and settings["layer"] not in gradcheck.REGISTRY:
        print(f"error: unknown layer {settings['layer']!r}; valid: {', '.join(gradcheck.layers())}",
              file=sys.stderr)
        return 2
    try:
        return COMMANDS[cmd][1](settings)
    except (DeDCGANError, ValueError, OSError) as exc:
        print(f"error [{cmd}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
