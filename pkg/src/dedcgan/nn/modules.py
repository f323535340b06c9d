"""Stateful layers holding parameters as :class:`~dedcgan.tensor.Tensor` leaves."""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from ..exceptions import CheckpointMismatch
from ..tensor import Tensor, tanh
from . import functional as F


class Module:
    """Minimal container: parameters, buffers, sub-modules and a train flag."""

    training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, v in vars(self).items():
            if isinstance(v, Module):
                yield name, v
            elif isinstance(v, (list, tuple)) and v and all(isinstance(m, Module) for m in v):
                for i, m in enumerate(v):
                    yield f"{name}.{i}", m

    def named_parameters(self, prefix: str = ""):
        for name, v in vars(self).items():
            if isinstance(v, Tensor) and v.requires_grad:
                yield prefix + name, v
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        sd = OrderedDict((k, p.data) for k, p in self.named_parameters())
        sd.update((k, b) for k, b in self.named_buffers())
        return sd

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        expected = set(own) | set(bufs)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise CheckpointMismatch(f"state keys differ: missing={missing} unexpected={extra}")
        for k, arr in state.items():
            target = own[k].data if k in own else bufs[k]
            if tuple(np.shape(arr)) != target.shape:
                raise CheckpointMismatch(f"{k}: stored shape {np.shape(arr)} != model shape {target.shape}")
            target[...] = np.asarray(arr, dtype=target.dtype)


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


def lecun_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    return _param(rng.standard_normal(shape) / math.sqrt(fan_in), dtype)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng, dtype=np.float32):
        self.weight = lecun_normal(rng, (out_features, in_features), in_features, dtype)
        self.bias = _param(np.zeros(out_features), dtype)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1, padding: int = 0,
                 rng=None, dtype=np.float32, zero_init: bool = False):
        self.stride, self.padding, self.k = stride, padding, k
        shape = (out_ch, in_ch, k, k)
        if zero_init:
            self.weight = _param(np.zeros(shape), dtype)
        else:
            self.weight = lecun_normal(rng, shape, in_ch * k * k, dtype)
        self.bias = _param(np.zeros(out_ch), dtype)

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1, padding: int = 0,
                 output_padding: int = 0, rng=None, dtype=np.float32):
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        # each output pixel receives about in_ch * (k/stride)^2 contributions
        fan_in = max(1, in_ch * (k // max(stride, 1)) ** 2)
        self.weight = lecun_normal(rng, (in_ch, out_ch, k, k), fan_in, dtype)
        self.bias = _param(np.zeros(out_ch), dtype)

    def forward(self, x):
        return F.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding,
                                  self.output_padding)


class DeformConv2d(Module):
    """Deformable convolution whose offsets come from a plain conv on the same input.

    The offset branch shares the main layer's kernel size, stride and padding
    so the offset field always lands on the output grid.  It starts at zero,
    making a fresh layer identical to a standard convolution.
    """

    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1, padding: int = 0,
                 rng=None, dtype=np.float32):
        self.stride, self.padding, self.k = stride, padding, k
        self.weight = lecun_normal(rng, (out_ch, in_ch, k, k), in_ch * k * k, dtype)
        self.bias = _param(np.zeros(out_ch), dtype)
        self.offset = Conv2d(in_ch, 2 * k * k, k, stride, padding, dtype=dtype, zero_init=True)

    def forward(self, x):
        return F.deform_conv2d(x, self.offset(x), self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        self.gamma = _param(np.ones(channels), dtype)
        self.beta = _param(np.zeros(channels), dtype)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Activation(Module):
    def __init__(self, kind: str = "selu", slope: float = 0.2):
        if kind not in ("selu", "relu", "leaky_relu", "tanh"):
            raise ValueError(f"unknown activation {kind!r}")
        self.kind, self.slope = kind, slope

    def forward(self, x):
        if self.kind == "selu":
            return F.selu(x)
        if self.kind == "relu":
            return F.relu(x)
        if self.kind == "leaky_relu":
            return F.leaky_relu(x, self.slope)
        return tanh(x)
