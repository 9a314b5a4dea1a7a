"""
Network layers for INVSEG.

This package provides:
- Basic ops: convolution, instance norm, leaky relu, pooling, interpolation
- Coupling blocks and invertible resampling (pixel shuffle + channel mixing)
- Composite blocks used by the U-Net builders
- Parameter initialization and the `.ivparams` checkpoint container
"""
from .parameters import (
    Initializer,
    ParameterFormatError,
    assign_parameters,
    load_parameters,
    save_parameters,
)
from .basic import (
    Conv3d,
    GaussianSample,
    GlobalAvgPool,
    InstanceNorm,
    LeakyReLU,
    Linear,
    MaxPool3d,
    Reshape,
    Softmax,
    TrilinearUpsample,
    interpolation_matrix,
)
from .blocks import (
    ChannelConcat,
    ChannelSplit,
    ResidualBlock,
    Sequential,
    make_down_transition,
    make_subnet,
    make_up_transition,
)
from .coupling import CouplingBlock
from .resample import InvertibleDownsample, InvertibleUpsample, NonInvertibleWeightError

__all__ = [
    "Initializer",
    "ParameterFormatError",
    "assign_parameters",
    "load_parameters",
    "save_parameters",
    "Conv3d",
    "GaussianSample",
    "GlobalAvgPool",
    "InstanceNorm",
    "LeakyReLU",
    "Linear",
    "MaxPool3d",
    "Reshape",
    "Softmax",
    "TrilinearUpsample",
    "interpolation_matrix",
    "ChannelConcat",
    "ChannelSplit",
    "ResidualBlock",
    "Sequential",
    "make_down_transition",
    "make_subnet",
    "make_up_transition",
    "CouplingBlock",
    "InvertibleDownsample",
    "InvertibleUpsample",
    "NonInvertibleWeightError",
]
