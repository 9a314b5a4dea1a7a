"""
3D cross-correlation and its adjoints.

The forward kernel gathers k x k x k windows with a strided view and
contracts them against the weight with a single tensordot, so results are
deterministic for a fixed BLAS thread count.
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Tensor, check_rank
from .errors import ShapeError


def conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    """
    Output extent of a convolution along one axis.

    Raises:
        ShapeError: If the extent is not integral or not positive
    """
    span = size + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"Non-integral output extent: ({size} + 2*{padding} - {kernel}) / {stride} + 1"
        )
    return span // stride + 1


def _check_conv_args(x: Tensor, weight: Tensor, stride: int, padding: int) -> Tuple[int, ...]:
    check_rank(x, 5, "conv3d input")
    check_rank(weight, 5, "conv3d weight")
    c_out, c_in, kd, kh, kw = weight.shape
    if x.shape[1] != c_in:
        raise ShapeError(
            f"conv3d channel mismatch: input {tuple(x.shape)} vs weight {tuple(weight.shape)}"
        )
    if not (kd == kh == kw) or kd % 2 == 0:
        raise ShapeError(f"conv3d kernel must be cubic with odd extent, got {tuple(weight.shape[2:])}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"Invalid stride {stride} / padding {padding}")
    out = tuple(conv_output_extent(s, kd, stride, padding) for s in x.shape[2:])
    return (kd,) + out


def _windows(x: Tensor, k: int, stride: int, padding: int, out: Tuple[int, int, int]) -> np.ndarray:
    """Strided view [N, C, D', H', W', k, k, k] over the zero-padded input."""
    if padding:
        p = padding
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k, k), axis=(2, 3, 4))
    if stride > 1:
        win = win[:, :, ::stride, ::stride, ::stride]
    return win[:, :, :out[0], :out[1], :out[2]]


def conv3d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    Standard 3D cross-correlation.

    Args:
        x: Input [N, C_in, D, H, W]
        weight: Kernel [C_out, C_in, k, k, k] with odd k
        bias: Optional [C_out]
        stride: Stride along every spatial axis
        padding: Zero padding along every spatial axis

    Returns:
        Output [N, C_out, D', H', W'] with D' = (D + 2p - k) / stride + 1
    """
    k, od, oh, ow = _check_conv_args(x, weight, stride, padding)
    win = _windows(x, k, stride, padding, (od, oh, ow))
    y = np.tensordot(win, weight, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    y = np.ascontiguousarray(np.moveaxis(y, 4, 1))
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"conv3d bias must have shape ({weight.shape[0]},), got {tuple(bias.shape)}")
        y += bias.reshape(1, -1, 1, 1, 1)
    return y


def conv3d_backward(
    x: Tensor,
    weight: Tensor,
    grad_out: Tensor,
    stride: int = 1,
    padding: int = 0,
) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of conv3d with respect to input, weight and bias.

    Returns:
        (grad_input, grad_weight, grad_bias)
    """
    k, od, oh, ow = _check_conv_args(x, weight, stride, padding)
    expected = (x.shape[0], weight.shape[0], od, oh, ow)
    if grad_out.shape != expected:
        raise ShapeError(f"conv3d grad_out shape {tuple(grad_out.shape)} != {expected}")

    win = _windows(x, k, stride, padding, (od, oh, ow))
    grad_weight = np.tensordot(grad_out, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    grad_bias = grad_out.sum(axis=(0, 2, 3, 4))

    # [N, D', H', W', C_in, k, k, k]
    cols = np.tensordot(grad_out, weight, axes=([1], [0]))
    p = padding
    n, c_in, d, h, w = x.shape
    grad_padded = np.zeros((n, c_in, d + 2 * p, h + 2 * p, w + 2 * p), dtype=x.dtype)
    s = stride
    for a in range(k):
        for b in range(k):
            for c in range(k):
                grad_padded[:, :, a:a + s * od:s, b:b + s * oh:s, c:c + s * ow:s] += (
                    np.moveaxis(cols[..., a, b, c], 4, 1)
                )
    grad_input = np.ascontiguousarray(grad_padded[:, :, p:p + d, p:p + h, p:p + w])
    return grad_input, np.ascontiguousarray(grad_weight), grad_bias
