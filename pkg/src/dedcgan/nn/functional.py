"""Differentiable layer operations on NCHW tensors.

Convolutions use an explicit im2col layout ``[C, k, k, N, Ho, Wo]`` so the
forward pass is one GEMM and the backward scatter is ``k*k`` strided adds.
Sampling coordinates are ``(row, col)`` throughout; a deformable offset field
stores ``(d_row, d_col)`` for kernel point ``n`` in channels ``2n, 2n+1``.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from ..exceptions import BadNorm, DegenerateBatch, OffsetShapeMismatch, ShapeMismatch
from ..tensor import Tensor, add, as_tensor, broadcast_to, log_softmax, make_op, matmul, transpose

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def transposed_out_size(n: int, k: int, s: int, p: int, output_pad: int = 0) -> int:
    return (n - 1) * s - 2 * p + k + output_pad


def _im2col(xp: np.ndarray, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i:i + s * ho:s, j:j + s * wo:s]
    return cols


def _col2im(cols: np.ndarray, shape, k: int, s: int, ho: int, wo: int) -> np.ndarray:
    out = np.zeros(shape, dtype=cols.dtype)
    ot = out.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            ot[:, :, i:i + s * ho:s, j:j + s * wo:s] += cols[:, i, j]
    return out


def _pad_hw(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


# ------------------------------------------------------------------ conv


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of ``x [N,C,H,W]`` with ``weight [O,C,k,k]``.

    No activation is applied here; compose with one to obtain a full
    convolution layer.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeMismatch(f"weight {weight.shape} incompatible with input channels {c}")
    s, p = int(stride), int(padding)
    ho, wo = out_size(h, k, s, p), out_size(w, k, s, p)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"input {h}x{w} too small for k={k}, s={s}, pad={p}")
    xp = _pad_hw(x.data, p)
    cols = _im2col(xp, k, s, ho, wo).reshape(c * k * k, n * ho * wo)
    w2 = weight.data.reshape(o, c * k * k)
    out = (w2 @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c, k, k, n, ho, wo)
            gxp = _col2im(dcols, xp.shape, k, s, ho, wo)
            gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make_op("conv2d", out, parents, bw)


def conv_transpose2d(y: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_padding: int = 0) -> Tensor:
    """Fractional-strided convolution: the adjoint of :func:`conv2d`.

    ``weight`` has shape ``[C_in, C_out, k, k]``; with zero bias,
    ``<conv2d(x; w), y> == <x, conv_transpose2d(y; w)>`` for matching shapes.
    """
    if y.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv_transpose2d expects 4-D input and weight, got {y.shape}, {weight.shape}")
    n, ci, h, w = y.shape
    wci, co, k, k2 = weight.shape
    if wci != ci or k != k2:
        raise ShapeMismatch(f"weight {weight.shape} incompatible with input channels {ci}")
    s, p, op = int(stride), int(padding), int(output_padding)
    if s < 1:
        raise ShapeMismatch("stride must be >= 1")
    if op >= max(s, 1) and op > 0:
        raise ShapeMismatch("output_padding must be smaller than stride")
    hout, wout = transposed_out_size(h, k, s, p, op), transposed_out_size(w, k, s, p, op)
    if hout < 1 or wout < 1:
        raise ShapeMismatch("transposed convolution output would be empty")
    hfull = max((h - 1) * s + k, p + hout)
    wfull = max((w - 1) * s + k, p + wout)
    w2 = weight.data.reshape(ci, co * k * k)
    y2 = y.data.transpose(1, 0, 2, 3).reshape(ci, -1)
    cols = (w2.T @ y2).reshape(co, k, k, n, h, w)
    full = _col2im(cols, (n, co, hfull, wfull), k, s, h, w)
    out = full[:, :, p:p + hout, p:p + wout]
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    parents = (y, weight) if bias is None else (y, weight, bias)

    def bw(g):
        canvas = np.zeros((n, co, hfull, wfull), dtype=g.dtype)
        canvas[:, :, p:p + hout, p:p + wout] = g
        gcols = _im2col(canvas, k, s, h, w).reshape(co * k * k, n * h * w)
        gy = (w2 @ gcols).reshape(ci, n, h, w).transpose(1, 0, 2, 3) if y.requires_grad else None
        gw = (y2 @ gcols.T).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gy, gw
        return gy, gw, g.sum(axis=(0, 2, 3))

    return make_op("conv_transpose2d", out, parents, bw)


# --------------------------------------------------------------- pooling


def pnorm_pool(x: Tensor, k: int, stride: int, p: float = math.inf, padding: int = 0) -> Tensor:
    """p-norm pooling ``(sum |f|^p)^(1/p)`` over ``k x k`` windows; ``p=inf`` is max pooling."""
    if p < 1:
        raise BadNorm(f"p-norm order must be >= 1, got {p}")
    if x.ndim != 4:
        raise ShapeMismatch(f"pnorm_pool expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    s, pd = int(stride), int(padding)
    ho, wo = out_size(h, k, s, pd), out_size(w, k, s, pd)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"input {h}x{w} too small for pool k={k}, s={s}")
    xp = _pad_hw(x.data, pd)
    cols = _im2col(xp, k, s, ho, wo).reshape(c, k * k, n, ho, wo)

    if math.isinf(p):
        arg = cols.argmax(axis=1)
        out = np.take_along_axis(cols, arg[:, None], axis=1)[:, 0]

        def dcols_fn(g):
            d = np.zeros_like(cols)
            np.put_along_axis(d, arg[:, None], g[:, None], axis=1)
            return d
    else:
        a = np.abs(cols)
        out = (a ** p).sum(axis=1) ** (1.0 / p)

        def dcols_fn(g):
            if p == 1:
                return np.sign(cols) * g[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(out > 0, out ** (1.0 - p), 0.0)
            return (a ** (p - 1)) * np.sign(cols) * (scale * g)[:, None]

    res = np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def bw(g):
        d = dcols_fn(g.transpose(1, 0, 2, 3)).reshape(c, k, k, n, ho, wo)
        gxp = _col2im(d, xp.shape, k, s, ho, wo)
        return (gxp[:, :, pd:pd + h, pd:pd + w] if pd else gxp,)

    return make_op("pnorm_pool", res, (x,), bw)


# ------------------------------------------------------------ activations


def selu(x: Tensor, lam: float = SELU_LAMBDA, alpha: float = SELU_ALPHA) -> Tensor:
    xd = x.data
    pos = xd > 0
    ex = np.exp(np.minimum(xd, 0.0))
    out = np.where(pos, lam * xd, lam * alpha * (ex - 1.0)).astype(x.dtype)
    dydx = np.where(pos, lam, lam * alpha * ex).astype(x.dtype)
    return make_op("selu", out, (x,), lambda g: (g * dydx,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_op("relu", x.data * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    d = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return make_op("leaky_relu", x.data * d, (x,), lambda g: (g * d,))


# ---------------------------------------------------------- batch norm


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (N, H, W).

    In training mode the running statistics are updated in place with
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    if x.ndim not in (2, 4):
        raise ShapeMismatch(f"batch_norm expects [N,C] or [N,C,H,W], got {x.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    xd = x.data
    gd = gamma.data.reshape(bshape)
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatch(f"batch norm in training mode needs batch >= 2, got {x.shape[0]}")
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mean.reshape(bshape).astype(xd.dtype)) * inv.reshape(bshape)
    out = gd * xhat + beta.data.reshape(bshape)
    m = xd.size // xd.shape[1]

    def bw(g):
        dbeta = g.sum(axis=axes)
        dgamma = (g * xhat).sum(axis=axes)
        dxhat = g * gd
        if training:
            dx = (inv.reshape(bshape) / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        else:
            dx = dxhat * inv.reshape(bshape)
        return dx, dgamma, dbeta

    return make_op("batch_norm", out.astype(xd.dtype), (x, gamma, beta), bw)


def relu_bn(x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var,
            training: bool, momentum: float = 0.9, eps: float = 1e-5) -> Tensor:
    return relu(batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps))


# ------------------------------------------------------------- dense


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight [out, in]``."""
    out = matmul(x, transpose(weight))
    if bias is not None:
        out = add(out, broadcast_to(bias, out.shape))
    return out


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross-entropy against integer labels or a soft-target matrix."""
    targets = np.asarray(targets)
    n, k = logits.shape
    if targets.ndim == 1:
        soft = np.zeros((n, k), dtype=logits.dtype)
        soft[np.arange(n), targets.astype(np.int64)] = 1.0
    else:
        if targets.shape != logits.shape:
            raise ShapeMismatch(f"targets {targets.shape} vs logits {logits.shape}")
        soft = targets.astype(logits.dtype)
    lp = log_softmax(logits, axis=1)
    return (lp * Tensor(soft, dtype=logits.dtype)).sum() * (-1.0 / n)


# ------------------------------------------------------------- bilinear


_DY = np.array([0, 0, 1, 1])
_DX = np.array([0, 1, 0, 1])


def _bilinear_plan(py: np.ndarray, px: np.ndarray, h: int, w: int):
    """Corner indices, weights and weight derivatives for bilinear sampling.

    Implements ``G(q, p) = g(q_r, p_r) * g(q_c, p_c)`` with
    ``g(a, b) = max(0, 1 - |a - b|)``.  Only the four integral neighbours can
    be non-zero.  Corners outside the map get weight 0 (zero padding).  The
    subgradient of ``g`` is taken as ``sign(a - b)`` away from the kinks and 0
    exactly at ``|a - b|`` in ``{0, 1}``.

    Returns ``(idx, weight, d_weight/d_row, d_weight/d_col)``, each ``[M, 4]``.
    """
    m = py.size
    dt = py.dtype
    y0 = np.floor(py)
    x0 = np.floor(px)
    ly = py - y0
    lx = px - x0
    yi = y0.astype(np.int64)
    xi = x0.astype(np.int64)
    vy = [(yi >= 0) & (yi < h), (yi >= -1) & (yi < h - 1)]
    vx = [(xi >= 0) & (xi < w), (xi >= -1) & (xi < w - 1)]
    wy = [1 - ly, ly]
    wx = [1 - lx, lx]
    sy = (ly > 0).astype(dt)
    sx = (lx > 0).astype(dt)
    base = yi * w + xi
    idx = np.empty((m, 4), dtype=np.int64)
    wt = np.empty((m, 4), dtype=dt)
    dwy = np.empty((m, 4), dtype=dt)
    dwx = np.empty((m, 4), dtype=dt)
    for j in range(4):
        a, b = _DY[j], _DX[j]
        ok = vy[a] & vx[b]
        okf = ok.astype(dt)
        idx[:, j] = np.where(ok, base + (a * w + b), 0)
        wyo = wy[a] * okf
        wxo = wx[b] * okf
        wt[:, j] = wyo * wx[b]
        dwy[:, j] = (sy if a else -sy) * wxo
        dwx[:, j] = (sx if b else -sx) * wyo
    return idx, wt, dwy, dwx


def bilinear_sample(x: Tensor, p: Tensor) -> Tensor:
    """Sample ``x [C,H,W]`` at fractional ``(row, col)`` locations ``p [..., 2]``.

    Returns ``[C, ...]``.  Differentiable in both ``x`` and ``p``.
    """
    p = as_tensor(p, dtype=x.dtype)
    if x.ndim != 3 or p.shape[-1] != 2:
        raise ShapeMismatch(f"bilinear_sample needs x [C,H,W] and p [...,2], got {x.shape}, {p.shape}")
    c, h, w = x.shape
    loc_shape = p.shape[:-1]
    py = p.data[..., 0].reshape(-1)
    px = p.data[..., 1].reshape(-1)
    idx, wt, dwy, dwx = _bilinear_plan(py, px, h, w)
    smat = _sampling_matrix(idx, wt, h * w)
    xt = x.data.reshape(c, h * w).T
    out = (smat @ xt).T

    def bw(g):
        g2 = g.reshape(c, -1).T
        gx = (smat.T @ g2).T.reshape(c, h, w)
        gp = np.empty((py.size, 2), dtype=p.dtype)
        gp[:, 0] = np.einsum("mc,mc->m", _sampling_matrix(idx, dwy, h * w) @ xt, g2)
        gp[:, 1] = np.einsum("mc,mc->m", _sampling_matrix(idx, dwx, h * w) @ xt, g2)
        return gx, gp.reshape(p.shape)

    return make_op("bilinear_sample", np.ascontiguousarray(out).reshape((c,) + loc_shape), (x, p), bw)


def _sampling_matrix(idx: np.ndarray, vals: np.ndarray, n_cols: int) -> sp.csr_matrix:
    """CSR matrix with one row per sampled location and its 4 corner entries."""
    m = idx.shape[0]
    indices = idx.reshape(-1).astype(np.int32)
    data = vals.reshape(-1)
    indptr = np.arange(0, 4 * m + 1, 4, dtype=np.int32)
    return sp.csr_matrix((data, indices, indptr), shape=(m, n_cols))


def deform_conv2d(x: Tensor, offset: Tensor, weight: Tensor, bias: Tensor | None = None,
                  stride: int = 1, padding: int = 0) -> Tensor:
    """Deformable convolution.

    ``y(p0) = sum_n w(p_n) * x(p0 + p_n + dp_n)`` where ``x(.)`` is evaluated
    by bilinear interpolation.  ``offset`` is ``[N, 2*k*k, Ho, Wo]``.
    Gradients flow to ``x``, ``offset``, ``weight`` and ``bias``.
    """
    if x.ndim != 4 or weight.ndim != 4 or offset.ndim != 4:
        raise ShapeMismatch("deform_conv2d expects 4-D input, offset and weight")
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeMismatch(f"weight {weight.shape} incompatible with input channels {c}")
    s, pd = int(stride), int(padding)
    ho, wo = out_size(h, k, s, pd), out_size(w, k, s, pd)
    kk = k * k
    if offset.shape[1] != 2 * kk:
        raise OffsetShapeMismatch(f"offset has {offset.shape[1]} channels, expected 2N = {2 * kk}")
    if offset.shape != (n, 2 * kk, ho, wo):
        raise ShapeMismatch(f"offset {offset.shape} must be {(n, 2 * kk, ho, wo)}")
    dt = x.dtype
    ki, kj = np.divmod(np.arange(kk), k)
    base_y = (np.arange(ho) * s - pd)[None, None, :, None] + ki[None, :, None, None]
    base_x = (np.arange(wo) * s - pd)[None, None, None, :] + kj[None, :, None, None]
    od = offset.data
    py = (base_y + od[:, 0::2]).astype(dt).reshape(-1)
    px = (base_x + od[:, 1::2]).astype(dt).reshape(-1)
    # rows enumerate (n, kernel point, ho, wo); the image index is folded into the column
    img = np.repeat(np.arange(n) * (h * w), kk * ho * wo)
    idx, wt, dwy, dwx = _bilinear_plan(py, px, h, w)
    idx += img[:, None]
    smat = _sampling_matrix(idx, wt, n * h * w)
    xt = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    cols = smat @ xt
    cols2 = cols.reshape(n, kk, ho, wo, c).transpose(4, 1, 0, 2, 3).reshape(c * kk, n * ho * wo)
    w2 = weight.data.reshape(o, c * kk)
    out = (w2 @ cols2).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, offset, weight) if bias is None else (x, offset, weight, bias)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols2.T).reshape(weight.shape) if weight.requires_grad else None
        dcols = (w2.T @ g2).reshape(c, kk, n, ho, wo).transpose(2, 1, 3, 4, 0).reshape(-1, c)
        gx = None
        if x.requires_grad:
            gx = (smat.T @ dcols).astype(dt).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        goff = None
        if offset.requires_grad:
            dy_mat = _sampling_matrix(idx, dwy, n * h * w)
            dx_mat = _sampling_matrix(idx, dwx, n * h * w)
            goff = np.empty((n, 2 * kk, ho, wo), dtype=dt)
            goff[:, 0::2] = np.einsum("mc,mc->m", dy_mat @ xt, dcols).reshape(n, kk, ho, wo)
            goff[:, 1::2] = np.einsum("mc,mc->m", dx_mat @ xt, dcols).reshape(n, kk, ho, wo)
        if bias is None:
            return gx, goff, gw
        return gx, goff, gw, g.sum(axis=(0, 2, 3))

    return make_op("deform_conv2d", out, parents, bw)
