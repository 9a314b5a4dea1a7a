"""
Dense tensor kernels for INVSEG.

This package provides:
- Precision selection and tensor construction
- Elementwise arithmetic, channel split/concat
- 3D convolution and its adjoints
- Pixel (un)shuffle for invertible resampling
"""
from .errors import ShapeError, PrecisionError
from .core import (
    Precision,
    BinaryOp,
    Tensor,
    as_tensor,
    elementwise_binary,
    split_channels,
    concat_channels,
)
from .conv import conv3d, conv3d_backward, conv_output_extent
from .shuffle import pixel_unshuffle3d, pixel_shuffle3d

__all__ = [
    "ShapeError",
    "PrecisionError",
    "Precision",
    "BinaryOp",
    "Tensor",
    "as_tensor",
    "elementwise_binary",
    "split_channels",
    "concat_channels",
    "conv3d",
    "conv3d_backward",
    "conv_output_extent",
    "pixel_unshuffle3d",
    "pixel_shuffle3d",
]
