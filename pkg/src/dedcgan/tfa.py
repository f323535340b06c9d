"""STFT spectrograms and Morlet CWT scalograms of dual-channel I/Q frames.

Both transforms produce a fixed-size ``[2, H, W]`` image: power is log
compressed with ``log(1 + beta * P)``, bilinearly resampled to ``H x W`` and
min-max normalised over the whole image (an image with zero dynamic range
maps to all zeros).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import container
from .exceptions import BadScale, WindowTooLong
from .radar import Dataset, IQFrame

BETA = 1e3


@dataclass
class Spectrogram:
    image: np.ndarray       # [2, H, W] in [0, 1]
    freq_axis: np.ndarray   # Hz for stft, scale (s) for cwt
    time_axis: np.ndarray   # s
    method: str
    source_label: int = -1


def window(name: str, n: int) -> np.ndarray:
    """Periodic analysis windows."""
    k = np.arange(n)
    if name in ("rect", "boxcar", "rectangular"):
        return np.ones(n)
    if name in ("hann", "hanning"):
        return 0.5 - 0.5 * np.cos(2 * np.pi * k / n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)
    raise ValueError(f"unknown window {name!r}")


@lru_cache(maxsize=16)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft(x: np.ndarray) -> np.ndarray:
    """Direct O(n^2) DFT along the last axis."""
    return x @ _dft_matrix(x.shape[-1]).T


def stft_power(x: np.ndarray, fs: float, window_len: int = 64, hop: int = 4,
               window_fn: str = "hann"):
    """Raw power ``|DFT(w * segment)|^2`` per column for ``x [..., T]``.

    Rows cover the full complex spectrum with DC centred (negative Doppler
    first).  Returns ``(power [..., L, n_cols], freqs, times)``.
    """
    x = np.asarray(x)
    t_len = x.shape[-1]
    if window_len > t_len:
        raise WindowTooLong(f"window {window_len} longer than signal {t_len}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    n_cols = 1 + (t_len - window_len) // hop
    segs = np.lib.stride_tricks.sliding_window_view(x, window_len, axis=-1)[..., ::hop, :][..., :n_cols, :]
    spec = dft(segs.astype(np.complex128) * window(window_fn, window_len))
    power = np.abs(np.fft.fftshift(spec, axes=-1)) ** 2
    freqs = (np.arange(window_len) - window_len // 2) * fs / window_len
    times = (np.arange(n_cols) * hop + window_len / 2) / fs
    return np.swapaxes(power, -1, -2), freqs, times


def morlet(t: np.ndarray, w0: float = 6.0) -> np.ndarray:
    """Analytic Morlet wavelet ``pi^(-1/4) exp(j w0 t) exp(-t^2/2)``."""
    return math.pi ** -0.25 * np.exp(1j * w0 * t - 0.5 * t * t)


def scale_to_freq(a, w0: float = 6.0):
    return w0 / (2 * np.pi * np.asarray(a))


def freq_to_scale(f, w0: float = 6.0):
    return w0 / (2 * np.pi * np.asarray(f))


def default_scales(fmin: float = 2.0, fmax: float = 60.0, n: int = 64, w0: float = 6.0) -> np.ndarray:
    """Log-spaced scales, ascending, covering ``fmin..fmax`` Hz."""
    return np.sort(freq_to_scale(np.geomspace(fmin, fmax, n), w0))


def cwt_power(x: np.ndarray, fs: float, scales: Sequence[float], w0: float = 6.0) -> np.ndarray:
    """Scalogram ``|<x, psi_{a,b}>|^2`` for ``x [..., T]`` at every sample ``b``.

    Direct convolution with ``psi_{a,b}(t) = psi((t - b) / a) / a`` (amplitude
    normalisation, so a unit tone peaks at the same height on every scale).
    Returns ``[..., n_scales, T]``.
    """
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size < 2:
        raise BadScale("need at least two scales")
    if (scales <= 0).any():
        raise BadScale("scales must be positive")
    x = np.asarray(x)
    lead = x.shape[:-1]
    t_len = x.shape[-1]
    flat = x.reshape(-1, t_len).astype(np.complex128)
    out = np.empty((flat.shape[0], scales.size, t_len))
    lags = (np.arange(t_len)[None, :] - np.arange(t_len)[:, None]) / fs  # [b, n] = t_n - t_b
    dt = 1.0 / fs
    for i, a in enumerate(scales):
        kern = np.conj(morlet(lags / a, w0)) * (dt / a)
        out[:, i] = np.abs(flat @ kern.T) ** 2
    return out.reshape(lead + (scales.size, t_len))


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation from ``n_in`` to ``n_out`` points with aligned end points."""
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    pos = np.linspace(0.0, n_in - 1, n_out)
    i0 = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    frac = pos - i0
    m[np.arange(n_out), i0] = 1 - frac
    m[np.arange(n_out), i0 + 1] += frac
    return m


def _resample_axis(ax: np.ndarray, n_out: int) -> np.ndarray:
    if ax.size == 1:
        return np.full(n_out, ax[0])
    return np.interp(np.linspace(0, ax.size - 1, n_out), np.arange(ax.size), ax)


def to_image(power: np.ndarray, height: int = 64, width: int = 64, beta: float = BETA) -> np.ndarray:
    """Log-compress, bilinearly resample and min-max normalise ``[..., C, F, T]`` power."""
    logp = np.log1p(beta * power)
    ry = _interp_matrix(power.shape[-2], height)
    rx = _interp_matrix(power.shape[-1], width)
    img = ry @ logp @ rx.T
    lo = img.min(axis=(-3, -2, -1), keepdims=True)
    hi = img.max(axis=(-3, -2, -1), keepdims=True)
    rng = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(rng > 0, (img - lo) / np.where(rng > 0, rng, 1.0), 0.0)
    return out


def stft(frame: IQFrame, window_len: int = 64, hop: int = 4, window_fn: str = "hann",
         height: int = 64, width: int = 64, beta: float = BETA) -> Spectrogram:
    power, freqs, times = stft_power(frame.channels, frame.fs_hz, window_len, hop, window_fn)
    return Spectrogram(to_image(power, height, width, beta), _resample_axis(freqs, height),
                       _resample_axis(times, width), "stft", frame.label)


def cwt(frame: IQFrame, scales: Sequence[float] | None = None, w0: float = 6.0,
        height: int = 64, width: int = 64, beta: float = BETA) -> Spectrogram:
    scales = default_scales(w0=w0) if scales is None else np.asarray(scales, dtype=np.float64)
    power = cwt_power(frame.channels, frame.fs_hz, scales, w0)
    times = np.arange(frame.n_samples) / frame.fs_hz
    return Spectrogram(to_image(power, height, width, beta), _resample_axis(np.asarray(scales), height),
                       _resample_axis(times, width), "cwt", frame.label)


@dataclass
class TFAConfig:
    method: str = "stft"
    window_len: int = 64
    hop: int = 4
    window_fn: str = "hann"
    w0: float = 6.0
    fmin: float = 2.0
    fmax: float = 60.0
    n_scales: int = 64
    height: int = 64
    width: int = 64
    beta: float = BETA


def batch_transform(frames: Sequence[IQFrame] | Dataset, method: str = "stft",
                    **params) -> list[Spectrogram]:
    """Transform every frame with one configuration; order and labels preserved."""
    if isinstance(frames, Dataset):
        frames = frames.frames
    cfg = TFAConfig(method=method, **params)
    images, fax, tax = transform_array([f.channels for f in frames], frames[0].fs_hz if frames else 1.0, cfg)
    return [Spectrogram(img, fax, tax, cfg.method, f.label) for img, f in zip(images, frames)]


def transform_array(channels, fs: float, cfg: TFAConfig):
    """Vectorised core: ``channels [n, 2, T]`` -> ``(images [n, 2, H, W], freq_axis, time_axis)``."""
    x = np.asarray(channels)
    if x.ndim != 3 or x.shape[1] != 2:
        raise ValueError(f"expected [n, 2, T] I/Q array, got {x.shape}")
    if cfg.method == "stft":
        power, ax, times = stft_power(x, fs, cfg.window_len, cfg.hop, cfg.window_fn)
    elif cfg.method == "cwt":
        ax = default_scales(cfg.fmin, cfg.fmax, cfg.n_scales, cfg.w0)
        power = cwt_power(x, fs, ax, cfg.w0)
        times = np.arange(x.shape[-1]) / fs
    else:
        raise ValueError(f"unknown method {cfg.method!r}")
    images = to_image(power, cfg.height, cfg.width, cfg.beta)
    return images, _resample_axis(np.asarray(ax), cfg.height), _resample_axis(times, cfg.width)


# ------------------------------------------------------------- storage


def save_spectrograms(specs: Sequence[Spectrogram], out_dir, class_names=None, extra: dict | None = None) -> Path:
    """Directory with ``images.dgt`` ([n, 2, H, W] f32), axes, ``labels.u16`` and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = np.stack([s.image for s in specs]).astype(np.float32)
    container.save_tensor(out / "images.dgt", images)
    container.save_tensor(out / "freq_axis.dgt", np.asarray(specs[0].freq_axis, dtype=np.float64))
    container.save_tensor(out / "time_axis.dgt", np.asarray(specs[0].time_axis, dtype=np.float64))
    container.save_labels(out / "labels.u16", [s.source_label for s in specs])
    container.write_manifest(out / "manifest.json", {
        "format": "dedcgan-spectrograms",
        "version": 1,
        "method": specs[0].method,
        "count": len(specs),
        "shape": list(images.shape[1:]),
        "class_names": list(class_names) if class_names is not None else None,
        "extra": extra or {},
    })
    return out


def load_spectrograms(path):
    """Returns ``(images float32 [n,2,H,W], labels, manifest)``."""
    root = Path(path)
    man = container.read_manifest(root / "manifest.json")
    images = container.load_tensor(root / "images.dgt")
    labels = container.load_labels(root / "labels.u16")
    return images, labels, man
