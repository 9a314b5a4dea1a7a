"""
Composite blocks and channel bookkeeping ops.

Sequential runs sub-ops with one child context each, so a composite node
stores exactly what its parts store and releases it as a unit.
"""
from typing import List, Sequence, Tuple

import numpy as np

from ..autodiff import Context, Op, Parameter
from ..tensor import ShapeError, concat_channels, split_channels
from .basic import Conv3d, InstanceNorm, LeakyReLU, MaxPool3d, TrilinearUpsample
from .parameters import Initializer


class Sequential(Op):
    kind = "sequential"

    def __init__(self, ops: Sequence[Op], kind: str = "sequential"):
        self.ops = list(ops)
        self.kind = kind

    def parameters(self) -> List[Parameter]:
        return [p for op in self.ops for p in op.parameters()]

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        for op in self.ops:
            x = op.forward(ctx.child(), x)
        return x

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        for op, child in zip(reversed(self.ops), reversed(ctx.children)):
            grad = op.backward(child, grad)
        return grad


def make_subnet(
    name: str,
    channels: int,
    init: Initializer,
    depth: int = 1,
    zero_init: bool = True,
) -> Sequential:
    """
    Residual function of a coupling block.

    depth x (conv3 -> instance norm -> leaky relu) followed by a final conv3,
    channels unchanged throughout. The final conv starts at zero when
    zero_init is set, which makes the enclosing block an identity.
    """
    if depth < 1:
        raise ValueError(f"Subnet depth must be >= 1, got {depth}")
    ops: List[Op] = []
    for k in range(depth):
        ops.append(Conv3d(f"{name}.conv{k}", channels, channels, init, bias=False))
        ops.append(InstanceNorm(f"{name}.norm{k}", channels, init))
        ops.append(LeakyReLU())
    ops.append(Conv3d(f"{name}.conv{depth}", channels, channels, init, zero_init=zero_init))
    return Sequential(ops, kind="subnet")


class ResidualBlock(Op):
    """Plain residual block: x + act(norm(conv(act(norm(conv(x))))))."""

    kind = "residual_block"

    def __init__(self, name: str, channels: int, init: Initializer):
        self.name = name
        self.body = Sequential(
            [
                Conv3d(f"{name}.conv0", channels, channels, init, bias=False),
                InstanceNorm(f"{name}.norm0", channels, init),
                LeakyReLU(),
                Conv3d(f"{name}.conv1", channels, channels, init, bias=False),
                InstanceNorm(f"{name}.norm1", channels, init),
                LeakyReLU(),
            ]
        )

    def parameters(self) -> List[Parameter]:
        return self.body.parameters()

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        return x + self.body.forward(ctx.child(), x)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        return grad + self.body.backward(ctx.children[0], grad)


def make_down_transition(name: str, in_channels: int, out_channels: int, init: Initializer) -> Sequential:
    """Max pooling followed by a 1x1x1 width change."""
    return Sequential(
        [MaxPool3d(), Conv3d(f"{name}.conv", in_channels, out_channels, init, kernel=1)],
        kind="down",
    )


def make_up_transition(name: str, in_channels: int, out_channels: int, init: Initializer) -> Sequential:
    """1x1x1 width change followed by trilinear upsampling."""
    return Sequential(
        [Conv3d(f"{name}.conv", in_channels, out_channels, init, kernel=1), TrilinearUpsample()],
        kind="up",
    )


class ChannelSplit(Op):
    """Split channels at a fixed index. Invertible (inverse is concat)."""

    kind = "split"
    invertible = True

    def __init__(self, at: int):
        self.at = at

    def forward(self, ctx: Context, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return split_channels(x, self.at)

    def backward(self, ctx: Context, ga: np.ndarray, gb: np.ndarray) -> np.ndarray:
        return concat_channels(ga, gb)

    def inverse(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape[1] != self.at:
            raise ShapeError(f"split inverse expects {self.at} leading channels, got {a.shape[1]}")
        return concat_channels(a, b)

    def restore(self, ctx, inputs, outputs) -> None:
        pass


class ChannelConcat(Op):
    """Concatenate along channels; `at` is the first operand's width. Invertible."""

    kind = "concat"
    invertible = True

    def __init__(self, at: int):
        self.at = at

    def forward(self, ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape[1] != self.at:
            raise ShapeError(f"concat expects {self.at} channels in its first operand, got shape {tuple(a.shape)}")
        return concat_channels(a, b)

    def backward(self, ctx: Context, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return split_channels(grad, self.at)

    def inverse(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return split_channels(y, self.at)

    def restore(self, ctx, inputs, outputs) -> None:
        pass
