"""Storage regimes and per-node activation policies."""
from enum import Enum


class StoragePolicy(str, Enum):
    """Memory regime applied to a whole tape."""
    STORE = "store"
    CHECKPOINT = "checkpoint"
    INVERTIBLE = "invertible"


class NodePolicy(str, Enum):
    """What a single node keeps between forward and backward."""
    STORE_OUTPUT = "store_output"
    RECOMPUTE_FROM_INVERSE = "recompute_from_inverse"
    CHECKPOINT_BOUNDARY = "checkpoint_boundary"


class Section(str, Enum):
    """Where a node sits in a network; only trunk nodes take part in recomputation."""
    STEM = "stem"
    TRUNK = "trunk"
    HEAD = "head"
    VAE = "vae"
