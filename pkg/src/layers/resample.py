"""
Learnable invertible resampling.

Downsampling squeezes 2x2x2 sub-voxels into channels (pixel unshuffle) and
mixes the resulting channels with an orthogonally initialized 1x1x1
convolution W. Upsampling applies the inverse mixing K = W^-1 and then
pixel shuffle, so a decoder upsample with the same W undoes a downsample
exactly.
"""
import logging
from typing import List, Tuple

import numpy as np

from ..autodiff import Context, Op, Parameter
from ..tensor import ShapeError, pixel_shuffle3d, pixel_unshuffle3d
from ..tensor.core import check_rank
from .parameters import Initializer

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e8
FACTOR = 2


class NonInvertibleWeightError(ValueError):
    """A channel-mixing matrix is singular or too badly conditioned to invert."""


def mix(weight: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a channel-mixing matrix [C, C] to [N, C, D, H, W]."""
    return np.ascontiguousarray(np.einsum("oc,ncdhw->nodhw", weight, x, optimize=True))


def mixing_grad(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d<grad, mix(M, x)>/dM."""
    return np.einsum("nodhw,ncdhw->oc", grad, x, optimize=True)


def invert_mixing(weight: np.ndarray, name: str = "mixing") -> np.ndarray:
    """
    Inverse of a mixing matrix, computed in float64 and cast back.

    Raises:
        NonInvertibleWeightError: If the condition number exceeds 1e8
    """
    w64 = weight.astype(np.float64)
    cond = np.linalg.cond(w64)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NonInvertibleWeightError(f"Mixing weight '{name}' is not invertible (condition number {cond:.3e})")
    return np.linalg.inv(w64).astype(weight.dtype)


class _Mixing(Op):
    invertible = True

    def __init__(self, name: str, size: int, init: Initializer, identity: bool = False):
        self.name = name
        self.size = size
        if identity:
            self.weight = init.identity(f"{name}.mixing", size)
        else:
            self.weight = init.orthogonal(f"{name}.mixing", size)
        self.validate()

    def parameters(self) -> List[Parameter]:
        return [self.weight]

    def validate(self) -> None:
        """Check the mixing matrix is invertible (after construction or load)."""
        invert_mixing(self.weight.data, self.weight.name)

    def _check_channels(self, channels: int, expected: int, what: str) -> None:
        if channels != expected:
            raise ShapeError(f"{self.kind} '{self.name}' expects {expected} {what} channels, got {channels}")


class InvertibleDownsample(_Mixing):
    """[N, C, D, H, W] -> [N, 8C, D/2, H/2, W/2]: y = W unshuffle(x)."""

    kind = "invertible_downsample"

    def __init__(self, name: str, in_channels: int, init: Initializer, identity: bool = False):
        self.in_channels = in_channels
        super().__init__(name, in_channels * FACTOR ** 3, init, identity)

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, f"{self.kind} input")
        self._check_channels(x.shape[1], self.in_channels, "input")
        u = pixel_unshuffle3d(x, FACTOR)
        ctx.save(u=u)
        return mix(self.weight.data, u)

    def _grads(self, u: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.weight.accumulate(mixing_grad(grad, u))
        return pixel_shuffle3d(mix(self.weight.data.T, grad), FACTOR)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        return self._grads(ctx["u"], grad)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        check_rank(y, 5, f"{self.kind} output")
        self._check_channels(y.shape[1], self.size, "output")
        return pixel_shuffle3d(mix(invert_mixing(self.weight.data, self.weight.name), y), FACTOR)

    def reverse_backward(self, ctx, outputs, grad_outputs):
        (y,) = outputs
        (grad,) = grad_outputs
        self._check_channels(y.shape[1], self.size, "output")
        u = mix(invert_mixing(self.weight.data, self.weight.name), y)
        ctx.recomputed()
        return (pixel_shuffle3d(u, FACTOR),), (self._grads(u, grad),)


class InvertibleUpsample(_Mixing):
    """[N, 8C, D, H, W] -> [N, C, 2D, 2H, 2W]: y = shuffle(W^-1 x)."""

    kind = "invertible_upsample"

    def __init__(self, name: str, out_channels: int, init: Initializer, identity: bool = False):
        self.out_channels = out_channels
        super().__init__(name, out_channels * FACTOR ** 3, init, identity)

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        check_rank(x, 5, f"{self.kind} input")
        self._check_channels(x.shape[1], self.size, "input")
        ctx.save(x=x)
        return pixel_shuffle3d(mix(invert_mixing(self.weight.data, self.weight.name), x), FACTOR)

    def _grads(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        k = invert_mixing(self.weight.data, self.weight.name)
        gu = pixel_unshuffle3d(grad, FACTOR)
        gk = mixing_grad(gu, x)
        # K = W^-1  =>  dL/dW = -K^T (dL/dK) K^T
        self.weight.accumulate(-k.T @ gk @ k.T)
        return mix(k.T, gu)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        return self._grads(ctx["x"], grad)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        check_rank(y, 5, f"{self.kind} output")
        return mix(self.weight.data, pixel_unshuffle3d(y, FACTOR))

    def reverse_backward(self, ctx, outputs, grad_outputs):
        (y,) = outputs
        (grad,) = grad_outputs
        x = self.inverse(y)
        ctx.recomputed()
        return (x,), (self._grads(x, grad),)
