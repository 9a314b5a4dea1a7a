"""
Non-invertible building blocks: convolution, instance normalization,
activation, pooling, interpolation, dense and shape ops.

Every op saves only what its own backward reads, so the activation meter
sees the true storage cost of each layer.
"""
import logging
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from ..autodiff import Context, Op, Parameter
from ..tensor import ShapeError, conv3d, conv3d_backward
from ..tensor.core import check_rank
from .parameters import Initializer

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
NORM_EPS = 1e-5


class Conv3d(Op):
    """3D convolution; kernel k, padding k // 2 by default. bias=False for convs that feed a norm."""

    kind = "conv3d"

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        init: Initializer,
        kernel: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        zero_init: bool = False,
        bias: bool = True,
    ):
        self.name = name
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        shape = (out_channels, in_channels, kernel, kernel, kernel)
        if zero_init:
            self.weight = init.zeros(f"{name}.weight", shape)
        else:
            self.weight = init.he_normal(f"{name}.weight", shape, fan_in=in_channels * kernel ** 3)
        self.bias = init.zeros(f"{name}.bias", (out_channels,)) if bias else None

    def parameters(self) -> List[Parameter]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.save(x=x)
        bias = None if self.bias is None else self.bias.data
        return conv3d(x, self.weight.data, bias, self.stride, self.padding)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        gx, gw, gb = conv3d_backward(ctx["x"], self.weight.data, grad, self.stride, self.padding)
        self.weight.accumulate(gw)
        if self.bias is not None:
            self.bias.accumulate(gb)
        return gx


class InstanceNorm(Op):
    """Per-(sample, channel) standardization over voxels, then affine."""

    kind = "instance_norm"

    def __init__(self, name: str, channels: int, init: Initializer, eps: float = NORM_EPS):
        self.name = name
        self.eps = eps
        self.gamma = init.ones(f"{name}.gamma", (channels,))
        self.beta = init.zeros(f"{name}.beta", (channels,))

    def parameters(self) -> List[Parameter]:
        return [self.gamma, self.beta]

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, "instance_norm input")
        if x.shape[1] != self.gamma.size:
            raise ShapeError(f"instance_norm expects {self.gamma.size} channels, got shape {tuple(x.shape)}")
        mean = x.mean(axis=(2, 3, 4), keepdims=True)
        var = x.var(axis=(2, 3, 4), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        ctx.save(xhat=xhat, inv_std=inv_std)
        return xhat * self.gamma.data.reshape(1, -1, 1, 1, 1) + self.beta.data.reshape(1, -1, 1, 1, 1)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        xhat, inv_std = ctx["xhat"], ctx["inv_std"]
        self.gamma.accumulate((grad * xhat).sum(axis=(0, 2, 3, 4)))
        self.beta.accumulate(grad.sum(axis=(0, 2, 3, 4)))
        g = grad * self.gamma.data.reshape(1, -1, 1, 1, 1)
        g_mean = g.mean(axis=(2, 3, 4), keepdims=True)
        gx_mean = (g * xhat).mean(axis=(2, 3, 4), keepdims=True)
        return inv_std * (g - g_mean - xhat * gx_mean)


class LeakyReLU(Op):
    kind = "leaky_relu"

    def __init__(self, slope: float = LEAKY_SLOPE):
        self.slope = slope

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.save(x=x)
        return np.where(x >= 0, x, self.slope * x)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        return np.where(ctx["x"] >= 0, grad, self.slope * grad)


class MaxPool3d(Op):
    """2x2x2 max pooling; keeps the argmax offsets (uint8) for backward."""

    kind = "maxpool3d"

    def __init__(self, window: int = 2):
        self.window = window

    def _blocks(self, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, "maxpool3d input")
        r = self.window
        n, c, d, h, w = x.shape
        if d % r or h % r or w % r:
            raise ShapeError(f"maxpool3d needs extents divisible by {r}, got {tuple(x.shape)}")
        blocks = x.reshape(n, c, d // r, r, h // r, r, w // r, r).transpose(0, 1, 2, 4, 6, 3, 5, 7)
        return blocks.reshape(n, c, d // r, h // r, w // r, r ** 3)

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        blocks = self._blocks(x)
        if ctx.recording:
            ctx.save(index=blocks.argmax(axis=-1).astype(np.uint8), shape=x.shape)
        return np.ascontiguousarray(blocks.max(axis=-1))

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        r = self.window
        n, c, d, h, w = ctx["shape"]
        index = ctx["index"].astype(np.intp)[..., None]
        blocks = np.zeros(grad.shape + (r ** 3,), dtype=grad.dtype)
        np.put_along_axis(blocks, index, grad[..., None], axis=-1)
        blocks = blocks.reshape(n, c, d // r, h // r, w // r, r, r, r).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        return np.ascontiguousarray(blocks).reshape(n, c, d, h, w)


@lru_cache(maxsize=64)
def interpolation_matrix(size: int, factor: int) -> np.ndarray:
    """
    Linear interpolation weights [size * factor, size], align_corners=False.

    Output sample i sits at source coordinate (i + 0.5) / factor - 0.5,
    clamped to the first voxel on the low side and to the last on the high side.
    """
    out = size * factor
    src = np.maximum((np.arange(out) + 0.5) / factor - 0.5, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.intp), size - 1)
    i1 = np.minimum(i0 + 1, size - 1)
    frac = src - i0
    matrix = np.zeros((out, size))
    rows = np.arange(out)
    np.add.at(matrix, (rows, i0), 1.0 - frac)
    np.add.at(matrix, (rows, i1), frac)
    matrix.setflags(write=False)
    return matrix


def _apply_along(x: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    y = np.tensordot(x, matrix.astype(x.dtype, copy=False), axes=([axis], [1]))
    return np.moveaxis(y, -1, axis)


class TrilinearUpsample(Op):
    """Separable trilinear interpolation by an integer factor. Saves nothing."""

    kind = "trilinear_upsample"

    def __init__(self, factor: int = 2):
        self.factor = factor

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, "trilinear_upsample input")
        if ctx.recording:
            ctx.save(shape=x.shape)
        y = x
        for axis in (2, 3, 4):
            y = _apply_along(y, interpolation_matrix(x.shape[axis], self.factor), axis)
        return np.ascontiguousarray(y)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        shape = ctx["shape"]
        g = grad
        for axis in (2, 3, 4):
            g = _apply_along(g, interpolation_matrix(shape[axis], self.factor).T, axis)
        return np.ascontiguousarray(g)


class Softmax(Op):
    """Softmax over the channel axis."""

    kind = "softmax"

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        z = np.exp(x - x.max(axis=1, keepdims=True))
        y = z / z.sum(axis=1, keepdims=True)
        ctx.save(y=y)
        return y

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        y = ctx["y"]
        return y * (grad - (grad * y).sum(axis=1, keepdims=True))


class Linear(Op):
    """Dense map [N, in] -> [N, out]."""

    kind = "linear"

    def __init__(self, name: str, in_features: int, out_features: int, init: Initializer, zero_init: bool = False):
        self.name = name
        shape = (out_features, in_features)
        if zero_init:
            self.weight = init.zeros(f"{name}.weight", shape)
        else:
            self.weight = init.he_normal(f"{name}.weight", shape, fan_in=in_features)
        self.bias = init.zeros(f"{name}.bias", (out_features,))

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 2, "linear input")
        if x.shape[1] != self.weight.shape[1]:
            raise ShapeError(f"linear expects {self.weight.shape[1]} features, got shape {tuple(x.shape)}")
        ctx.save(x=x)
        return x @ self.weight.data.T + self.bias.data

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        x = ctx["x"]
        self.weight.accumulate(grad.T @ x)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.data


class GlobalAvgPool(Op):
    """[N, C, D, H, W] -> [N, C]."""

    kind = "global_avg_pool"

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, "global_avg_pool input")
        if ctx.recording:
            ctx.save(shape=x.shape)
        return x.mean(axis=(2, 3, 4))

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        shape = ctx["shape"]
        voxels = shape[2] * shape[3] * shape[4]
        return np.ascontiguousarray(np.broadcast_to((grad / voxels)[:, :, None, None, None], shape))


class Reshape(Op):
    """Reshape every sample to a fixed trailing shape."""

    kind = "reshape"

    def __init__(self, shape: Tuple[int, ...]):
        self.shape = tuple(shape)

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"Cannot reshape {tuple(x.shape)} to [N, {', '.join(map(str, self.shape))}]")
        if ctx.recording:
            ctx.save(shape=x.shape)
        return np.ascontiguousarray(x).reshape((x.shape[0],) + self.shape)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(ctx["shape"])


class GaussianSample(Op):
    """
    Reparameterized latent sample z = mu + exp(logvar / 2) * eps.

    In evaluation mode z = mu and nothing random is drawn.
    """

    kind = "gaussian_sample"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def forward(self, ctx: Context, mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
        if mu.shape != logvar.shape:
            raise ShapeError(f"mu {tuple(mu.shape)} and logvar {tuple(logvar.shape)} differ")
        if not ctx.training:
            if ctx.recording:
                ctx.save(eps=None)
            return mu.copy()
        eps = self.rng.standard_normal(mu.shape).astype(mu.dtype)
        std = np.exp(0.5 * logvar)
        ctx.save(eps=eps, std=std)
        return mu + std * eps

    def backward(self, ctx: Context, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        eps = ctx["eps"]
        if eps is None:
            return grad, np.zeros_like(grad)
        return grad, 0.5 * grad * ctx["std"] * eps
