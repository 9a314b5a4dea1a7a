"""
Additive coupling block.

    x = (x1, x2) split at C/2
    y1 = x1 + N1(x2)
    y2 = x2 + N2(y1)

The inverse runs in the opposite order (x2 = y2 - N2(y1), then
x1 = y1 - N1(x2)) and exists for any subnetworks N1, N2.
"""
import logging
from typing import List, Tuple

import numpy as np

from ..autodiff import Context, Op, Parameter
from ..tensor import ShapeError, concat_channels, split_channels
from ..tensor.core import check_rank
from .blocks import make_subnet
from .parameters import Initializer

logger = logging.getLogger(__name__)


class CouplingBlock(Op):
    kind = "coupling"
    invertible = True

    def __init__(
        self,
        name: str,
        channels: int,
        init: Initializer,
        depth: int = 1,
        zero_init: bool = True,
    ):
        if channels < 2 or channels % 2:
            raise ShapeError(f"Coupling block '{name}' needs an even channel count, got {channels}")
        self.name = name
        self.channels = channels
        self.half = channels // 2
        self.n1 = make_subnet(f"{name}.n1", self.half, init, depth=depth, zero_init=zero_init)
        self.n2 = make_subnet(f"{name}.n2", self.half, init, depth=depth, zero_init=zero_init)

    def parameters(self) -> List[Parameter]:
        return self.n1.parameters() + self.n2.parameters()

    def _split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        check_rank(x, 5, f"coupling '{self.name}' input")
        if x.shape[1] != self.channels:
            raise ShapeError(
                f"Coupling block '{self.name}' expects {self.channels} channels, got shape {tuple(x.shape)}"
            )
        return split_channels(x, self.half)

    def forward(self, ctx: Context, x: np.ndarray) -> np.ndarray:
        x1, x2 = self._split(x)
        y1 = x1 + self.n1.forward(ctx.child(), x2)
        y2 = x2 + self.n2.forward(ctx.child(), y1)
        return concat_channels(y1, y2)

    def backward(self, ctx: Context, grad: np.ndarray) -> np.ndarray:
        c1, c2 = ctx.children
        gy1, gy2 = split_channels(grad, self.half)
        gz1 = gy1 + self.n2.backward(c2, gy2)
        gx2 = gy2 + self.n1.backward(c1, gz1)
        return concat_channels(gz1, gx2)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y1, y2 = self._split(y)
        x2 = y2 - self.n2(y1)
        x1 = y1 - self.n1(x2)
        return concat_channels(x1, x2)

    def reverse_backward(
        self,
        ctx: Context,
        outputs: Tuple[np.ndarray, ...],
        grad_outputs: Tuple[np.ndarray, ...],
    ) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...]]:
        """
        Rebuild x from y and backpropagate in one sweep.

        Each subnet is evaluated once (recording), immediately differentiated
        and released, so at most one subnet's activations are alive.
        """
        (y,) = outputs
        (grad,) = grad_outputs
        y1, y2 = self._split(y)
        gy1, gy2 = split_channels(grad, self.half)

        c2 = ctx.child()
        x2 = y2 - self.n2.forward(c2, y1)
        ctx.recomputed()
        gz1 = gy1 + self.n2.backward(c2, gy2)
        c2.release()

        c1 = ctx.child()
        x1 = y1 - self.n1.forward(c1, x2)
        ctx.recomputed()
        gx2 = gy2 + self.n1.backward(c1, gz1)
        c1.release()

        return (concat_channels(x1, x2),), (concat_channels(gz1, gx2),)
