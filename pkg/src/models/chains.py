"""
Block chains for memory profiling.

A chain is L identical-shape blocks applied in sequence; it isolates how
each storage regime scales with depth.
"""
from enum import Enum
from typing import Union

from ..autodiff import Tape
from ..layers import CouplingBlock, Initializer, ResidualBlock
from ..tensor import Precision


class ChainKind(str, Enum):
    COUPLING = "coupling"
    RESIDUAL = "residual"


def build_chain(
    kind: Union[ChainKind, str] = ChainKind.COUPLING,
    length: int = 4,
    channels: int = 8,
    depth: int = 1,
    seed: int = 0,
    precision: Precision = Precision.F64,
    zero_init: bool = False,
) -> Tape:
    """
    Build a tape x -> block_0 -> ... -> block_{L-1}.

    Coupling chains are invertible; residual chains are not.
    """
    kind = ChainKind(kind)
    if length < 1:
        raise ValueError(f"Chain length must be >= 1, got {length}")
    init = Initializer(seed, precision)
    tape = Tape(f"{kind.value}_chain_{length}", precision)
    h = tape.input("x", channels=channels)
    for i in range(length):
        name = f"block{i}"
        if kind is ChainKind.COUPLING:
            op = CouplingBlock(name, channels, init, depth=depth, zero_init=zero_init)
        else:
            op = ResidualBlock(name, channels, init)
        h = tape.add(op, h, name=name)
    tape.output(h)
    return tape
