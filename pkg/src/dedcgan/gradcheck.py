"""Central finite-difference gradient checks for the layer zoo.

Each registered layer builds a random small problem in float64, reduces the
output to a scalar with a fixed random projection, and compares analytic
gradients to central differences, perturbing one coordinate at a time.

The relative error of a parameter group is
``max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import UnknownLayer
from .nn import functional as F
from .rng import stream
from .tensor import Tensor, backward, no_grad


def numeric_grad(fn: Callable[[], float], arr: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn()
        flat[i] = orig - eps
        fm = fn()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.abs(a).max(initial=0)), float(np.abs(b).max(initial=0)), 1e-12)
    return float(np.abs(a - b).max(initial=0)) / denom


def check(fn: Callable[..., Tensor], inputs: dict[str, np.ndarray], eps: float = 1e-5,
          rng: np.random.Generator | None = None) -> dict[str, float]:
    """Gradient-check ``fn(**tensors)`` with respect to every entry in ``inputs``.

    Returns the relative error per input name.
    """
    rng = rng or stream(0, "gradcheck-proj")
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    out = fn(**tensors)
    proj = rng.standard_normal(out.shape)
    loss = (out * Tensor(proj, dtype=np.float64)).sum()
    backward(loss)

    def scalar() -> float:
        with no_grad():
            o = fn(**{k: Tensor(v) for k, v in arrays.items()})
        return float((o.data * proj).sum())

    errs = {}
    for k, arr in arrays.items():
        num = numeric_grad(scalar, arr, eps)
        ana = tensors[k].grad if tensors[k].grad is not None else np.zeros_like(arr)
        errs[k] = rel_error(ana, num)
    return errs


@dataclass
class LayerReport:
    layer: str
    trials: int
    tol: float
    max_errors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.max_errors.values())

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [f"{self.layer}: {status} ({self.trials} trials, tol {self.tol:g})"]
        out += [f"  {k:<14s} max rel err {v:.3e}" for k, v in sorted(self.max_errors.items())]
        return out


def _dims(rng, lo=1, hi=6, n=1):
    return [int(v) for v in rng.integers(lo, hi + 1, size=n)]


def _case_conv2d(rng):
    n, c, o = _dims(rng, 1, 3, 3)
    k = int(rng.integers(1, 4))
    s = int(rng.integers(1, 3))
    p = int(rng.integers(0, 2))
    h, w = _dims(rng, k, 6, 2)
    fn = lambda x, w_, b: F.conv2d(x, w_, b, s, p)  # noqa: E731
    return fn, {"x": rng.standard_normal((n, c, h, w)), "w_": rng.standard_normal((o, c, k, k)),
                "b": rng.standard_normal(o)}


def _case_conv_transpose(rng):
    n, c, o = _dims(rng, 1, 3, 3)
    k = int(rng.integers(1, 5))
    s = int(rng.integers(1, 3))
    p = int(rng.integers(0, max(1, k // 2 + 1)))
    op = int(rng.integers(0, s))
    h, w = _dims(rng, 1, 5, 2)
    if F.transposed_out_size(min(h, w), k, s, p, op) < 1:
        p = 0
    fn = lambda y, w_, b: F.conv_transpose2d(y, w_, b, s, p, op)  # noqa: E731
    return fn, {"y": rng.standard_normal((n, c, h, w)), "w_": rng.standard_normal((c, o, k, k)),
                "b": rng.standard_normal(o)}


def _case_pool(rng, p):
    n, c = _dims(rng, 1, 3, 2)
    k = int(rng.integers(1, 4))
    s = int(rng.integers(1, 3))
    h, w = _dims(rng, k, 6, 2)
    return (lambda x: F.pnorm_pool(x, k, s, p)), {"x": rng.standard_normal((n, c, h, w)) + 0.1}


def _case_selu(rng):
    shape = _dims(rng, 1, 6, int(rng.integers(1, 4)))
    x = rng.standard_normal(shape) * 2
    x = np.where(np.abs(x) < 1e-3, 0.5, x)
    return (lambda x: F.selu(x)), {"x": x}


def _case_relu_bn(rng):
    n = int(rng.integers(2, 4))
    c, h, w = _dims(rng, 1, 4, 3)
    rm, rv = np.zeros(c), np.ones(c)

    def fn(x, gamma, beta):
        # keep BN in training mode but skip the running-stat update during probes
        return F.batch_norm(x, gamma, beta, rm.copy(), rv.copy(), True)

    x = rng.standard_normal((n, c, h, w))
    gamma = rng.uniform(0.5, 1.5, c)
    beta = rng.uniform(0.3, 1.0, c)
    return fn, {"x": x, "gamma": gamma, "beta": beta}


def _case_relu_bn_full(rng):
    fn, inputs = _case_relu_bn(rng)
    return (lambda x, gamma, beta: F.relu(fn(x, gamma, beta))), inputs


def _case_bilinear(rng):
    c = int(rng.integers(1, 4))
    h, w = _dims(rng, 2, 6, 2)
    m = int(rng.integers(1, 6))
    p = np.stack([rng.uniform(-0.9, h - 0.1, m), rng.uniform(-0.9, w - 0.1, m)], axis=-1)
    p = _jitter(p)
    return (lambda x, p: F.bilinear_sample(x, p)), {"x": rng.standard_normal((c, h, w)), "p": p}


def _jitter(a, margin=1e-3):
    frac = a - np.floor(a)
    bump = (frac < margin) | (frac > 1 - margin)
    return np.where(bump, a + 0.37, a)


def _case_deform(rng):
    n, c, o = _dims(rng, 1, 2, 3)
    k = int(rng.integers(1, 4))
    s = int(rng.integers(1, 3))
    p = int(rng.integers(0, 2))
    h, w = _dims(rng, max(k, 2), 6, 2)
    x = rng.standard_normal((n, c, h, w))
    ow = rng.standard_normal((2 * k * k, c, k, k)) * 0.3
    ob = _jitter(rng.uniform(-1.5, 1.5, 2 * k * k))

    def fn(x, w_, b, off_w, off_b):
        off = F.conv2d(x, off_w, off_b, s, p)
        return F.deform_conv2d(x, off, w_, b, s, p)

    inputs = {"x": x, "w_": rng.standard_normal((o, c, k, k)), "b": rng.standard_normal(o),
              "off_w": ow, "off_b": ob}
    # reject draws where a sampling location sits within eps of a bilinear kink
    with no_grad():
        off = F.conv2d(Tensor(x), Tensor(ow), Tensor(ob), s, p).data
    frac = off - np.floor(off)
    if ((frac < 1e-3) | (frac > 1 - 1e-3)).any():
        return _case_deform(rng)
    return fn, inputs


REGISTRY: dict[str, tuple[Callable, float]] = {
    "conv2d": (_case_conv2d, 1e-4),
    "conv-transpose": (_case_conv_transpose, 1e-4),
    "pnorm-pool-1": (lambda r: _case_pool(r, 1.0), 1e-4),
    "pnorm-pool-2": (lambda r: _case_pool(r, 2.0), 1e-4),
    "selu": (_case_selu, 1e-6),
    "batch-norm": (_case_relu_bn, 1e-4),
    "relu-bn": (_case_relu_bn_full, 1e-4),
    "bilinear": (_case_bilinear, 1e-3),
    "deform-conv": (_case_deform, 1e-3),
}


def run(layer: str, trials: int = 20, eps: float = 1e-5, tol: float | None = None,
        seed: int = 0) -> LayerReport:
    """Run ``trials`` random finite-difference checks for one registered layer."""
    if layer not in REGISTRY:
        raise UnknownLayer(f"unknown layer {layer!r}; valid: {', '.join(sorted(REGISTRY))}")
    make_case, default_tol = REGISTRY[layer]
    rep = LayerReport(layer, trials, default_tol if tol is None else tol)
    for t in range(trials):
        rng = stream(seed, "gradcheck", layer, t)
        fn, inputs = make_case(rng)
        for k, e in check(fn, inputs, eps, rng).items():
            if not math.isfinite(e):
                e = math.inf
            rep.max_errors[k] = max(rep.max_errors.get(k, 0.0), e)
    return rep


def layers() -> list[str]:
    return sorted(REGISTRY)


__all__ = ["check", "numeric_grad", "rel_error", "run", "layers", "LayerReport", "REGISTRY"]
