"""Shared fixtures-as-functions for the test modules."""
import numpy as np


def toy_images(per_class: int, seed: int, size: int = 8, noise: float = 0.1):
    """Two Gaussian-blob classes rendered as ``[n, 2, size, size]`` images in ``[0, 1]``."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    centres = [(size * 0.25, size * 0.25), (size * 0.7, size * 0.7)]
    blobs = [np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 4.0) for cy, cx in centres]
    images, labels = [], []
    for c, blob in enumerate(blobs):
        base = np.stack([blob, blob[::-1]])
        for _ in range(per_class):
            images.append(np.clip(base + noise * r.standard_normal(base.shape), 0, 1))
            labels.append(c)
    return np.array(images, dtype=np.float32), np.array(labels)


TOY_GAN = dict(d_channels=(8, 16), g_channels=(16, 8), latent_dim=16)


# brute-force loop oracles for the conv family


def conv_oracle(x, w, b, s, p):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    xp[:, :, p:p + h, p:p + wd] = x
    ho, wo = (h + 2 * p - k) // s + 1, (wd + 2 * p - k) // s + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * s:i * s + k, j * s:j * s + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w) + b
    return out


def bilinear_oracle(img, py, px):
    h, w = img.shape
    total = 0.0
    for qy in range(h):
        for qx in range(w):
            g = max(0.0, 1 - abs(qy - py)) * max(0.0, 1 - abs(qx - px))
            total += g * img[qy, qx]
    return total


def deform_oracle(x, off, w, b, s, p):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = off.shape[2:]
    out = np.zeros((n, o, ho, wo))
    for bi in range(n):
        for i in range(ho):
            for j in range(wo):
                for u in range(k):
                    for v in range(k):
                        t = u * k + v
                        py = i * s - p + u + off[bi, 2 * t, i, j]
                        px = j * s - p + v + off[bi, 2 * t + 1, i, j]
                        vals = np.array([bilinear_oracle(x[bi, ci], py, px) for ci in range(c)])
                        out[bi, :, i, j] += w[:, :, u, v] @ vals
        out[bi] += b[:, None, None]
    return out
