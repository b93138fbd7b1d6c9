"""Complex tensors, the network ops with their backward passes, and Adam."""

from .functional import (
    cbatchnorm_backward,
    cbatchnorm_forward,
    cconv2d,
    cconv2d_backward,
    cconv2d_forward,
    channels_to_complex,
    complex_to_channels,
    conv2d,
    crelu,
    inv_sqrt_2x2,
    relu,
    split_mse_loss,
)
from .layers import BatchNorm2d, ComplexBatchNorm2d, ComplexConv2d, Conv2d
from .optim import AdamState, adam_step
from .tensor import CTensor, no_grad

# the kernel and BN-state types are the layer objects themselves
CConvKernel = ComplexConv2d
CBatchNormState = ComplexBatchNorm2d

__all__ = [
    "CTensor",
    "no_grad",
    "cconv2d",
    "cconv2d_forward",
    "cconv2d_backward",
    "cbatchnorm_forward",
    "cbatchnorm_backward",
    "conv2d",
    "crelu",
    "relu",
    "split_mse_loss",
    "channels_to_complex",
    "complex_to_channels",
    "inv_sqrt_2x2",
    "Conv2d",
    "ComplexConv2d",
    "BatchNorm2d",
    "ComplexBatchNorm2d",
    "CConvKernel",
    "CBatchNormState",
    "AdamState",
    "adam_step",
]
