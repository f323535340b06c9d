"""Generator, discriminator-classifier and the pooling CNN baseline.

Every model is built from a plain-dict architecture descriptor so a
checkpoint can rebuild it and verify its weights against it.
"""
from __future__ import annotations

import math

import numpy as np

from .nn import functional as F
from .nn.modules import (Activation, BatchNorm2d, Conv2d, ConvTranspose2d, DeformConv2d, Linear,
                         Module)
from .rng import stream
from .tensor import Tensor, tanh

ACTIVATIONS = ("selu", "relu-bn", "selu-bn")
KERNELS = ("deformable", "standard")


def _dtype(name: str):
    return {"float32": np.float32, "float64": np.float64}[name]


class Discriminator(Module):
    """Strided-conv stack (no pooling) with a ``K + 1``-way head; the last logit is "fake"."""

    def __init__(self, n_classes: int, in_channels: int = 2, image_size: int = 64,
                 channels=(16, 32, 64, 128), kernel_size: int = 4, activation: str = "selu",
                 kernel: str = "deformable", seed: int = 0, dtype: str = "float32"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        self.descriptor = dict(type="discriminator", n_classes=n_classes, in_channels=in_channels,
                               image_size=image_size, channels=list(channels),
                               kernel_size=kernel_size, activation=activation, kernel=kernel,
                               seed=seed, dtype=dtype)
        dt = _dtype(dtype)
        rng = stream(seed, "init", "discriminator")
        self.n_classes = n_classes
        pad = (kernel_size - 2) // 2
        size, cin = image_size, in_channels
        self.n_blocks = len(channels)
        self.use_bn = activation.endswith("-bn")
        for i, c in enumerate(channels, 1):
            layer = DeformConv2d if kernel == "deformable" else Conv2d
            setattr(self, f"conv{i}", layer(cin, c, kernel_size, 2, pad, rng=rng, dtype=dt))
            if self.use_bn:
                setattr(self, f"bn{i}", BatchNorm2d(c, dtype=dt))
            size = F.out_size(size, kernel_size, 2, pad)
            cin = c
        if size < 1:
            raise ValueError(f"image size {image_size} too small for {len(channels)} stride-2 blocks")
        self.act = Activation("relu" if activation == "relu-bn" else "selu")
        self.head = Linear(cin * size * size, n_classes + 1, rng, dt)

    def features(self, x: Tensor) -> Tensor:
        for i in range(1, self.n_blocks + 1):
            x = getattr(self, f"conv{i}")(x)
            if self.use_bn:
                x = getattr(self, f"bn{i}")(x)
            x = self.act(x)
        return x

    def forward(self, x: Tensor) -> Tensor:
        h = self.features(x)
        return self.head(h.reshape(h.shape[0], -1))


class Generator(Module):
    """Dense projection followed by fractional-strided conv blocks and a tanh output conv."""

    def __init__(self, latent_dim: int = 100, out_channels: int = 2, image_size: int = 64,
                 channels=(64, 32, 16, 8), seed: int = 0, dtype: str = "float32"):
        n_up = len(channels) - 1
        base = image_size // 2 ** n_up
        if base < 1 or base * 2 ** n_up != image_size:
            raise ValueError(f"image size {image_size} not reachable with {n_up} x2 upsamplings")
        self.descriptor = dict(type="generator", latent_dim=latent_dim, out_channels=out_channels,
                               image_size=image_size, channels=list(channels), seed=seed, dtype=dtype)
        dt = _dtype(dtype)
        rng = stream(seed, "init", "generator")
        self.latent_dim, self.base, self.c0 = latent_dim, base, channels[0]
        self.project = Linear(latent_dim, channels[0] * base * base, rng, dt)
        self.n_up = n_up
        for i, (a, b) in enumerate(zip(channels[:-1], channels[1:]), 1):
            setattr(self, f"up{i}", ConvTranspose2d(a, b, 4, 2, 1, rng=rng, dtype=dt))
        self.out = Conv2d(channels[-1], out_channels, 3, 1, 1, rng=rng, dtype=dt)
        self.act = Activation("selu")

    def forward(self, z: Tensor) -> Tensor:
        h = self.act(self.project(z)).reshape(z.shape[0], self.c0, self.base, self.base)
        for i in range(1, self.n_up + 1):
            h = self.act(getattr(self, f"up{i}")(h))
        return tanh(self.out(h))

    def sample_latent(self, count: int, rng: np.random.Generator) -> Tensor:
        dt = self.project.weight.dtype
        return Tensor(rng.standard_normal((count, self.latent_dim)).astype(dt))


class BaselineCNN(Module):
    """Conventional CNN: conv -> BN -> ReLU -> overlapping 3x3/2 max pooling per block."""

    def __init__(self, n_classes: int, in_channels: int = 2, image_size: int = 64,
                 channels=(24, 48, 96, 192), kernel_size: int = 3, pool_k: int = 3,
                 pool_stride: int = 2, seed: int = 0, dtype: str = "float32"):
        self.descriptor = dict(type="cnn", n_classes=n_classes, in_channels=in_channels,
                               image_size=image_size, channels=list(channels),
                               kernel_size=kernel_size, pool_k=pool_k, pool_stride=pool_stride,
                               seed=seed, dtype=dtype)
        dt = _dtype(dtype)
        rng = stream(seed, "init", "cnn")
        self.n_classes = n_classes
        self.pool_k, self.pool_stride = pool_k, pool_stride
        pad = kernel_size // 2
        size, cin = image_size, in_channels
        self.n_blocks = len(channels)
        for i, c in enumerate(channels, 1):
            setattr(self, f"conv{i}", Conv2d(cin, c, kernel_size, 1, pad, rng=rng, dtype=dt))
            setattr(self, f"bn{i}", BatchNorm2d(c, dtype=dt))
            size = F.out_size(size, pool_k, pool_stride, 0)
            cin = c
        if size < 1:
            raise ValueError(f"image size {image_size} too small for {len(channels)} pooling blocks")
        self.head = Linear(cin * size * size, n_classes, rng, dt)

    def forward(self, x: Tensor) -> Tensor:
        for i in range(1, self.n_blocks + 1):
            x = getattr(self, f"bn{i}")(getattr(self, f"conv{i}")(x))
            x = F.pnorm_pool(F.relu(x), self.pool_k, self.pool_stride, math.inf)
        return self.head(x.reshape(x.shape[0], -1))


def build(descriptor: dict) -> Module:
    d = dict(descriptor)
    kind = d.pop("type")
    cls = {"discriminator": Discriminator, "generator": Generator, "cnn": BaselineCNN}.get(kind)
    if cls is None:
        raise ValueError(f"unknown model type {kind!r}")
    return cls(**d)
