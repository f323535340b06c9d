"""Experiment orchestration, single-sample benchmarking and image dumps.

``run_experiment`` executes synth -> tfa -> train -> evaluate for every
(axis, seed) pair named in an :class:`ExperimentConfig` and emits one CSV
row per pair plus one median row per axis.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import container, radar, tfa, training
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .exceptions import CheckpointMismatch, DeDCGANError
from .rng import stream
from .tensor import Tensor, no_grad
from .validation import check_fractions

# ------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    classes: int = 4
    per_class: int = 100
    fs_hz: float = 500.0
    snr_db: float = 20.0
    speed_mps: float = 1.0
    method: str = "stft"
    window_len: int = 64
    hop: int = 4
    height: int = 64
    width: int = 64
    splits: tuple = (0.25, 0.25, 0.5)
    seeds: tuple = (0, 1, 2)
    runs: tuple = (
        {"name": "cnn", "arch": "cnn"},
        {"name": "dedcgan", "arch": "dedcgan", "activation": "selu", "kernel": "deformable"},
    )
    reference: str = "cnn"
    epochs: int = 50
    batch_size: int = 16
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    timing_passes: int = 100
    preview_count: int = 8

    def __post_init__(self):
        self.splits = check_fractions(self.splits)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("seeds list must not be empty")
        self.runs = tuple(dict(r) for r in self.runs)
        names = [r.get("name") for r in self.runs]
        if not self.runs or None in names or len(set(names)) != len(names):
            raise ValueError("runs need unique 'name' entries")
        for r in self.runs:
            if r.get("arch") not in ("cnn", "dedcgan"):
                raise ValueError(f"run {r['name']!r}: arch must be 'cnn' or 'dedcgan'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["splits"], d["seeds"], d["runs"] = list(self.splits), list(self.seeds), [dict(r) for r in self.runs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def tfa_config(self) -> tfa.TFAConfig:
        return tfa.TFAConfig(method=self.method, window_len=self.window_len, hop=self.hop,
                             height=self.height, width=self.width)

    def train_config(self, run: dict, seed: int) -> training.TrainConfig:
        base = dict(epochs=self.epochs, batch_size=self.batch_size, lr_g=self.lr_g, lr_d=self.lr_d,
                    seed=seed)
        base.update({k: v for k, v in run.items() if k not in ("name", "arch")})
        return training.TrainConfig.from_dict(base)


def split_indices(labels, fractions=(0.25, 0.25, 0.5), seed: int = 0) -> list[np.ndarray]:
    """Per-class stratified split; each part is returned in ascending index order."""
    labels = np.asarray(labels)
    fractions = check_fractions(fractions)
    parts: list[list[int]] = [[] for _ in fractions]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[stream(seed, "split", int(c)).permutation(idx.size)]
        bounds = np.round(np.cumsum((0.0,) + fractions) * idx.size).astype(int)
        for i in range(len(fractions)):
            parts[i].extend(idx[bounds[i]:bounds[i + 1]].tolist())
    return [np.array(sorted(p), dtype=np.int64) for p in parts]


# ------------------------------------------------------------- experiment


@dataclass
class RunOutcome:
    axis: str
    seed: int
    run: dict
    result: training.TrainResult
    metrics: training.Metrics
    val_accuracy: float
    seconds: float = 0.0        # train + evaluate wall-clock


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outcomes: list[RunOutcome] = field(default_factory=list)
    csv_text: str = ""

    def accuracies(self, axis: str) -> list[float]:
        return [o.metrics.accuracy for o in self.outcomes if o.axis == axis]

    def median(self, axis: str) -> float:
        return float(np.median(self.accuracies(axis)))

    def outcome(self, axis: str, seed: int) -> RunOutcome:
        return next(o for o in self.outcomes if o.axis == axis and o.seed == seed)


CSV_COLUMNS = ["row", "axis", "seed", "arch", "activation", "kernel", "method", "accuracy",
               "val_accuracy", "per_class_accuracy", "params", "median_ms", "delta", "config_hash"]
TIMING_COLUMNS = ("median_ms",)


def _fmt(v) -> str:
    return f"{v:.6f}"


def spectrogram_set(cfg: ExperimentConfig, seed: int):
    ds = radar.make_dataset(cfg.classes, cfg.per_class, cfg.fs_hz, cfg.snr_db, seed, cfg.speed_mps)
    frames = np.stack([f.channels for f in ds.frames])
    images, _, _ = tfa.transform_array(frames, ds.fs_hz, cfg.tfa_config())
    return images.astype(np.float32), ds.labels, ds


def run_experiment(cfg: ExperimentConfig, out_dir=None, axes=None, log=None) -> ExperimentResult:
    """Run every configured axis for every seed, write ``results.csv`` when ``out_dir`` is given.

    ``axes`` restricts the run to a subset of axis names.
    """
    runs = [r for r in cfg.runs if axes is None or r["name"] in axes]
    res = ExperimentResult(cfg)
    out = Path(out_dir) if out_dir is not None else None
    for seed in cfg.seeds:
        try:
            images, labels, _ = spectrogram_set(cfg, seed)
        except DeDCGANError as exc:
            raise type(exc)(f"[synth/tfa seed={seed}] {exc}") from exc
        tr, va, te = split_indices(labels, cfg.splits, seed)
        for run in runs:
            stage = "train"
            try:
                tc = cfg.train_config(run, seed)
                trainer = training.train_gan if run["arch"] == "dedcgan" else training.train_cnn
                t0 = time.perf_counter()
                result = trainer(images[tr], labels[tr], tc, cfg.classes, None)
                stage = "evaluate"
                metrics = training.evaluate(result.model, images[te], labels[te], cfg.timing_passes,
                                            result.history)
                val_acc = training.accuracy(result.model, images[va], labels[va]) if va.size else float("nan")
            except DeDCGANError as exc:
                raise type(exc)(f"[{stage} axis={run['name']} seed={seed}] {exc}") from exc
            seconds = time.perf_counter() - t0
            if log:
                log(f"{run['name']} seed={seed} acc={metrics.accuracy:.4f} ({seconds:.1f}s)")
            res.outcomes.append(RunOutcome(run["name"], seed, run, result, metrics, val_acc, seconds))
            if out is not None:
                save_run(out / "runs" / f"{run['name']}-seed{seed}", result, cfg.preview_count, seed)
    res.csv_text = results_csv(res, runs)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(res.csv_text, encoding="utf-8")
        container.write_manifest(out / "config.json", cfg.to_dict())
    return res


def results_csv(res: ExperimentResult, runs) -> str:
    cfg = res.config
    h = cfg.hash()
    names = [r["name"] for r in runs]
    medians = {n: res.median(n) for n in names}
    ref = medians.get(cfg.reference)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for run in runs:
        arch = run["arch"]
        act = run.get("activation", "relu-bn" if arch == "cnn" else "selu")
        kern = run.get("kernel", "standard" if arch == "cnn" else "deformable")
        outs = sorted((o for o in res.outcomes if o.axis == run["name"]), key=lambda o: o.seed)
        for o in outs:
            m = o.metrics
            w.writerow(["run", o.axis, o.seed, arch, act, kern, cfg.method, _fmt(m.accuracy),
                        _fmt(o.val_accuracy), ";".join(_fmt(a) for a in m.per_class_accuracy),
                        m.params, f"{m.median_ms:.3f}", "", h])
        delta = "" if ref is None else _fmt(medians[run["name"]] - ref)
        w.writerow(["summary", run["name"], "median", arch, act, kern, cfg.method,
                    _fmt(medians[run["name"]]),
                    _fmt(float(np.median([o.val_accuracy for o in outs]))), "",
                    outs[0].metrics.params, f"{float(np.median([o.metrics.median_ms for o in outs])):.3f}",
                    delta, h])
    return buf.getvalue()


def strip_timing(csv_text: str) -> str:
    """CSV text with timing columns blanked, for byte-level reproducibility checks."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    drop = [rows[0].index(c) for c in TIMING_COLUMNS if c in rows[0]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([v for i, v in enumerate(r) if i not in drop])
    return buf.getvalue()


def save_run(path, result: training.TrainResult, preview_count: int = 8, seed: int = 0) -> Path:
    path = Path(path)
    models = {"disc": result.model} if result.generator is not None else {"cnn": result.model}
    if result.generator is not None:
        models["gen"] = result.generator
    save_checkpoint(path / "checkpoint", models, result.config.to_dict(), result.epochs_run,
                    result.rng_state, result.history)
    if result.generator is not None and preview_count > 0:
        write_samples(path / "generated", training.generate(result.generator, preview_count, seed))
    return path


# ------------------------------------------------------------- images


def to_pgm_bytes(image: np.ndarray) -> bytes:
    """Binary 8-bit PGM (P5, maxval 255) of a 2-D array, min-max scaled."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    pix = np.round(scaled * 255.0).astype(np.uint8)
    return f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    return np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def sample_sheet(sample: np.ndarray) -> np.ndarray:
    """``[C, H, W]`` -> ``[H, C * W]`` with channels placed side by side."""
    sample = np.asarray(sample)
    return np.concatenate(list(sample), axis=1) if sample.ndim == 3 else sample


def write_samples(out_dir, samples: np.ndarray) -> list[Path]:
    """``samples.dgt`` holding the whole batch plus one PGM preview per sample."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    container.save_tensor(out / "samples.dgt", np.asarray(samples, dtype=np.float32))
    paths = []
    for i, s in enumerate(samples):
        p = out / f"sample_{i:04d}.pgm"
        p.write_bytes(to_pgm_bytes(sample_sheet(s)))
        paths.append(p)
    return paths


# ------------------------------------------------------------- benchmark


@dataclass
class BenchResult:
    names: tuple[str, str]
    times_ms: dict[str, np.ndarray]
    params: dict[str, int]

    def summary(self, name: str) -> dict:
        t = self.times_ms[name]
        return {"model": name, "median_ms": float(np.median(t)), "p10_ms": float(np.percentile(t, 10)),
                "p90_ms": float(np.percentile(t, 90)), "params": self.params[name]}

    def ratio(self) -> float:
        a, b = self.names
        return self.summary(a)["median_ms"] / self.summary(b)["median_ms"]

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "median_ms", "p10_ms", "p90_ms", "params"])
        for n in self.names:
            s = self.summary(n)
            w.writerow([n, f"{s['median_ms']:.4f}", f"{s['p10_ms']:.4f}", f"{s['p90_ms']:.4f}", s["params"]])
        return buf.getvalue()


def classifier_of(ckpt: Checkpoint):
    for key in ("disc", "cnn"):
        if key in ckpt.models:
            return ckpt.models[key]
    raise CheckpointMismatch(f"checkpoint holds no classifier (models: {sorted(ckpt.models)})")


def bench(model_a, model_b, repeats: int = 100, warmup: int = 10, seed: int = 0,
          names=("a", "b")) -> BenchResult:
    """Interleaved single-sample inference timing of two models on one shared input."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if names[0] == names[1]:
        names = (f"{names[0]}#a", f"{names[1]}#b")
    da, db = model_a.descriptor, model_b.descriptor
    shape_a = (da["in_channels"], da["image_size"], da["image_size"])
    shape_b = (db["in_channels"], db["image_size"], db["image_size"])
    if shape_a != shape_b:
        raise CheckpointMismatch(f"models expect different inputs: {shape_a} vs {shape_b}")
    x_np = stream(seed, "bench").random((1,) + shape_a) * 2.0 - 1.0
    models = (model_a, model_b)
    xs = [Tensor(x_np.astype(next(iter(m.parameters())).dtype)) for m in models]
    for m in models:
        m.eval()
    times = {n: np.empty(repeats) for n in names}
    with threadpool_limits(limits=1), no_grad():
        for _ in range(warmup):
            for m, x in zip(models, xs):
                m(x)
        for i in range(repeats):
            # alternate the order so neither model always runs on a warm cache
            order = (0, 1) if i % 2 == 0 else (1, 0)
            for j in order:
                t0 = time.perf_counter()
                models[j](xs[j])
                times[names[j]][i] = (time.perf_counter() - t0) * 1e3
    return BenchResult(tuple(names), times, {names[0]: model_a.num_parameters(),
                                             names[1]: model_b.num_parameters()})


def bench_checkpoints(path_a, path_b, repeats: int = 100, warmup: int = 10, seed: int = 0) -> BenchResult:
    ma = classifier_of(load_checkpoint(path_a))
    mb = classifier_of(load_checkpoint(path_b))
    return bench(ma, mb, repeats, warmup, seed, (Path(path_a).name, Path(path_b).name))
