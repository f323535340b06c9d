from . import functional
from .functional import (
    SELU_ALPHA,
    SELU_LAMBDA,
    batch_norm,
    bilinear_sample,
    conv2d,
    conv_transpose2d,
    cross_entropy,
    deform_conv2d,
    linear,
    pnorm_pool,
    relu,
    relu_bn,
    selu,
)
from .modules import (
    Activation,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    DeformConv2d,
    Linear,
    Module,
)

__all__ = [
    "functional", "SELU_ALPHA", "SELU_LAMBDA", "batch_norm", "bilinear_sample", "conv2d",
    "conv_transpose2d", "cross_entropy", "deform_conv2d", "linear", "pnorm_pool", "relu",
    "relu_bn", "selu", "Activation", "BatchNorm2d", "Conv2d", "ConvTranspose2d",
    "DeformConv2d", "Linear", "Module",
]
