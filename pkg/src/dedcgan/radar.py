"""Synthetic dual-channel CW Doppler radar returns for parametric hand gestures.

The hand is a point scatterer moving in the horizontal plane in front of the
antennas.  Positions are ``(x, y)`` in metres with ``y`` along the line of
sight, so the range is ``R(t) = |d + y(t)|``.  Channel ``k`` receives

    s_k(t) = A(R) * exp(-j * 4*pi*f_c/c * R(t) + j*phi_k) + n_k(t),

with ``A(R) = (0.3 / R)**2`` and ``phi_2 - phi_1`` a fixed quadrature offset.
An approaching hand (``dR/dt < 0``) therefore shows a positive Doppler shift
``2 * v * f_c / c``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from .exceptions import EmptyDataset, NyquistViolation, UnknownKind
from .rng import derive_seed, stream

F_CARRIER = 5.8e9
C_LIGHT = 2.998e8
REFERENCE_RANGE = 0.3
QUADRATURE = math.pi / 2

BASIC_KINDS = ("circle", "square", "tick", "cross")
DISTANCES = (0.3, 0.5, 1.0)
SCALES = (0.2, 0.5)

# unit-extent polylines, (x lateral, y radial); closed paths loop, open ones ping-pong
_POLYLINES = {
    "square": (((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)), True),
    "tick": (((-0.5, 0.0), (-1 / 6, -0.5), (0.5, 0.5)), False),
    "cross": (((-0.5, 0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, -0.5)), True),
}


def doppler_hz(radial_speed: float) -> float:
    return 2.0 * radial_speed * F_CARRIER / C_LIGHT


@dataclass(frozen=True)
class GestureSpec:
    """One gesture trial.  ``kind`` is a basic gesture, ``"linear"`` (a
    constant-velocity approach used as a test hook) or an ordered pair of
    basic gestures performed back to back."""

    kind: str | tuple[str, str]
    distance_m: float = 0.5
    scale_m: float = 0.2
    speed_mps: float = 1.0
    duration_s: float = 1.0
    seed: int = 0
    reverse: bool = False

    def __post_init__(self):
        if isinstance(self.kind, list):
            object.__setattr__(self, "kind", tuple(self.kind))
        kinds = self.kind if isinstance(self.kind, tuple) else (self.kind,)
        for k in kinds:
            if k not in BASIC_KINDS and not (k == "linear" and len(kinds) == 1):
                raise UnknownKind(f"unknown gesture kind {k!r}")
        if len(kinds) > 2:
            raise UnknownKind("combinations are ordered pairs")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.speed_mps < 0:
            raise ValueError("speed_mps must be non-negative")
        if not self.scale_m < self.distance_m:
            raise ValueError(f"scale_m ({self.scale_m}) must be smaller than distance_m ({self.distance_m})")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = list(self.kind) if isinstance(self.kind, tuple) else self.kind
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GestureSpec":
        d = dict(d)
        if isinstance(d["kind"], list):
            d["kind"] = tuple(d["kind"])
        return cls(**d)


@dataclass
class IQFrame:
    fs_hz: float
    channels: np.ndarray  # complex [2, T]
    label: int
    spec: GestureSpec

    def __post_init__(self):
        if self.channels.ndim != 2 or self.channels.shape[0] != 2:
            raise ValueError(f"channels must be [2, T], got {self.channels.shape}")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


# ------------------------------------------------------------- trajectories


def _polyline(points, closed: bool, arc: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.diff(pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    total = lens.sum()
    if closed:
        s = np.mod(arc, total)
    else:
        s = np.mod(arc, 2 * total)
        s = np.where(s > total, 2 * total - s, s)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    frac = (s - cum[i]) / lens[i]
    return pts[i] + frac[:, None] * seg[i]


def _basic_position(kind: str, scale: float, speed: float, t: np.ndarray, reverse: bool) -> np.ndarray:
    if kind == "circle":
        r = scale / 2
        omega = (speed / r) * (-1 if reverse else 1)
        th = omega * t
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    if kind == "linear":
        sgn = 1 if reverse else -1
        return np.stack([np.zeros_like(t), sgn * speed * t], axis=-1)
    if kind not in _POLYLINES:
        raise UnknownKind(f"unknown gesture kind {kind!r}")
    pts, closed = _POLYLINES[kind]
    pts = np.asarray(pts[::-1] if reverse else pts) * scale
    return _polyline(pts, closed, speed * t)


def trajectory(kind, scale_m: float, speed_mps: float, t, duration_s: float = 1.0,
               reverse: bool = False) -> np.ndarray:
    """Hand position(s) in metres at time(s) ``t``; returns ``[..., 2]``.

    A combination ``(a, b)`` performs ``a`` over the first half of the window
    and ``b`` over the second, translated so the path stays continuous.
    """
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    tt = np.atleast_1d(t).reshape(-1)
    if isinstance(kind, (tuple, list)):
        if len(kind) == 1:
            kind = kind[0]
        else:
            a, b = kind
            half = duration_s / 2
            pa = _basic_position(a, scale_m, speed_mps, np.minimum(tt, half), reverse)
            end_a = _basic_position(a, scale_m, speed_mps, np.array([half]), reverse)[0]
            start_b = _basic_position(b, scale_m, speed_mps, np.array([0.0]), reverse)[0]
            pb = _basic_position(b, scale_m, speed_mps, np.maximum(tt - half, 0.0), reverse)
            pos = np.where((tt < half)[:, None], pa, pb - start_b + end_a)
            return pos[0] if scalar else pos.reshape(t.shape + (2,))
    pos = _basic_position(kind, scale_m, speed_mps, tt, reverse)
    return pos[0] if scalar else pos.reshape(t.shape + (2,))


def path_length(kind: str, scale_m: float) -> float:
    """Length of one full traversal of a basic closed path (or one pass of an open one)."""
    if kind == "circle":
        return math.pi * scale_m
    if kind not in _POLYLINES:
        raise UnknownKind(f"unknown gesture kind {kind!r}")
    pts, closed = _POLYLINES[kind]
    pts = np.asarray(pts) * scale_m
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def max_radial_speed(kind, speed_mps: float) -> float:
    """Analytic maximum of ``|dR/dt|`` over the gesture's path geometry."""
    kinds = kind if isinstance(kind, (tuple, list)) else (kind,)
    best = 0.0
    for k in kinds:
        if k in ("circle", "linear"):
            best = max(best, speed_mps)
            continue
        if k not in _POLYLINES:
            raise UnknownKind(f"unknown gesture kind {k!r}")
        pts, closed = _POLYLINES[k]
        pts = np.asarray(pts)
        if closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.diff(pts, axis=0)
        uy = np.abs(seg[:, 1]) / np.hypot(seg[:, 0], seg[:, 1])
        best = max(best, speed_mps * float(uy.max()))
    return best


# ------------------------------------------------------------- synthesis


def synthesize(spec: GestureSpec, fs_hz: float = 500.0, snr_db: float | None = 20.0,
               label: int = -1, phase_offset: float = QUADRATURE) -> IQFrame:
    """Simulate the dual-channel baseband capture of one gesture trial.

    ``snr_db=None`` gives a noise-free frame.  Noise is complex white
    Gaussian, per channel, scaled against the noise-free signal power.
    """
    fd_max = doppler_hz(max_radial_speed(spec.kind, spec.speed_mps))
    if fd_max > fs_hz / 2:
        raise NyquistViolation(
            f"max Doppler {fd_max:.2f} Hz exceeds fs/2 = {fs_hz / 2:.2f} Hz "
            f"(speed {spec.speed_mps} m/s)")
    n = int(round(fs_hz * spec.duration_s))
    t = np.arange(n) / fs_hz
    pos = trajectory(spec.kind, spec.scale_m, spec.speed_mps, t, spec.duration_s, spec.reverse)
    rng_ = np.abs(spec.distance_m + pos[:, 1])
    amp = (REFERENCE_RANGE / rng_) ** 2
    s1 = amp * np.exp(-1j * (4 * math.pi * F_CARRIER / C_LIGHT) * rng_)
    ch = np.stack([s1, s1 * np.exp(1j * phase_offset)])
    if snr_db is not None:
        p_sig = np.mean(np.abs(s1) ** 2)
        sigma = math.sqrt(p_sig / 10 ** (snr_db / 10) / 2)
        g = stream(spec.seed, "noise").standard_normal((2, 2, n))
        ch = ch + sigma * (g[0] + 1j * g[1])
    return IQFrame(fs_hz=float(fs_hz), channels=ch, label=int(label), spec=spec)


# ------------------------------------------------------------- taxonomy


@dataclass(frozen=True)
class GestureClass:
    name: str
    kind: str | tuple[str, str]
    reverse: bool = False
    speed_factor: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = list(self.kind) if isinstance(self.kind, tuple) else self.kind
        return d


def gesture_classes(n: int = 4) -> list[GestureClass]:
    """The 4 basic gestures, or the 24-class set.

    24 = 4 singles + 12 ordered pairs of distinct gestures + 4 reversed
    singles + 4 double-speed singles.
    """
    singles = [GestureClass(k, k) for k in BASIC_KINDS]
    if n == 4:
        return singles
    if n != 24:
        raise ValueError("class count must be 4 or 24")
    pairs = [GestureClass(f"{a}+{b}", (a, b)) for a, b in itertools.permutations(BASIC_KINDS, 2)]
    rev = [GestureClass(f"{k}-reversed", k, reverse=True) for k in BASIC_KINDS]
    fast = [GestureClass(f"{k}-fast", k, speed_factor=2.0) for k in BASIC_KINDS]
    return singles + pairs + rev + fast


def _placements(distances=DISTANCES, scales=SCALES) -> list[tuple[float, float]]:
    return [(d, r) for d in distances for r in scales if r < d]


def sample_spec(cls: GestureClass, class_index: int, index: int, seed: int,
                speed_mps: float = 1.0, speed_jitter: float = 0.1,
                distances=DISTANCES, scales=SCALES, duration_s: float = 1.0) -> GestureSpec:
    """The GestureSpec of sample ``index`` of class ``class_index``; a pure function of its arguments."""
    rng = stream(seed, "sample", class_index, index)
    places = _placements(distances, scales)
    d, r = places[int(rng.integers(len(places)))]
    speed = speed_mps * cls.speed_factor * (1.0 + speed_jitter * rng.uniform(-1.0, 1.0))
    return GestureSpec(kind=cls.kind, distance_m=d, scale_m=r, speed_mps=float(speed),
                       duration_s=duration_s, seed=derive_seed(seed, "sample", class_index, index),
                       reverse=cls.reverse)


@dataclass
class Dataset:
    frames: list[IQFrame]
    classes: list[GestureClass]
    fs_hz: float
    snr_db: float | None
    seed: int
    per_class: int
    speed_mps: float = 1.0
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def labels(self) -> np.ndarray:
        return np.array([f.label for f in self.frames], dtype=np.int64)

    @property
    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]


def make_dataset(classes: int | Sequence[GestureClass] = 4, per_class: int = 200,
                 fs_hz: float = 500.0, snr_db: float | None = 20.0, seed: int = 0,
                 speed_mps: float = 1.0, speed_jitter: float = 0.1) -> Dataset:
    """Balanced labelled set ordered class by class.

    Frames are stored as complex64, the precision of the on-disk format, so an
    in-memory dataset and its reloaded copy are identical.
    """
    if per_class < 1:
        raise EmptyDataset("per_class must be >= 1")
    defs = gesture_classes(classes) if isinstance(classes, int) else list(classes)
    frames = []
    for ci, cls in enumerate(defs):
        for i in range(per_class):
            spec = sample_spec(cls, ci, i, seed, speed_mps, speed_jitter)
            fr = synthesize(spec, fs_hz, snr_db, label=ci)
            fr.channels = fr.channels.astype(np.complex64)
            frames.append(fr)
    return Dataset(frames, defs, float(fs_hz), snr_db, int(seed), int(per_class), float(speed_mps),
                   {"speed_jitter": speed_jitter})


# ------------------------------------------------------------- storage


def save_dataset(ds: Dataset, out_dir) -> Path:
    """Manifest JSON, one ``[2, T, 2]`` f32 DGT1 tensor per frame, u16 label table."""
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, fr in enumerate(ds.frames):
        name = f"samples/{i:06d}.dgt"
        ch = fr.channels
        arr = np.stack([ch.real, ch.imag], axis=-1).astype(np.float32)
        container.save_tensor(out / name, arr)
        entries.append({"file": name, "label": fr.label, "spec": fr.spec.to_dict()})
    container.save_labels(out / "labels.u16", ds.labels)
    container.write_manifest(out / "manifest.json", {
        "format": "dedcgan-iq-dataset",
        "version": 1,
        "class_names": ds.class_names,
        "classes": [c.to_dict() for c in ds.classes],
        "fs_hz": ds.fs_hz,
        "snr_db": ds.snr_db,
        "seed": ds.seed,
        "per_class": ds.per_class,
        "speed_mps": ds.speed_mps,
        "extra": ds.extra,
        "count": len(ds.frames),
        "samples": entries,
    })
    return out


def load_dataset(path) -> Dataset:
    root = Path(path)
    man = container.read_manifest(root / "manifest.json")
    labels = container.load_labels(root / "labels.u16")
    frames = []
    for e, lab in zip(man["samples"], labels):
        arr = container.load_tensor(root / e["file"])
        ch = (arr[..., 0] + 1j * arr[..., 1]).astype(np.complex64)
        frames.append(IQFrame(man["fs_hz"], ch, int(lab), GestureSpec.from_dict(e["spec"])))
    defs = [GestureClass(c["name"], tuple(c["kind"]) if isinstance(c["kind"], list) else c["kind"],
                         c["reverse"], c["speed_factor"]) for c in man["classes"]]
    return Dataset(frames, defs, man["fs_hz"], man["snr_db"], man["seed"], man["per_class"],
                   man.get("speed_mps", 1.0), man.get("extra", {}))
