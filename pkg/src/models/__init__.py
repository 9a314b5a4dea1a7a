"""
Segmentation networks.

This package provides:
- ModelSpec: declarative architecture description
- Baseline, Partially-InvRes and Fully-InvRes 3D U-Net builders
- The VAE regularization branch
- Block chains for memory profiling
"""
from .spec import Architecture, ModelSpec
from .unet import (
    BUILDERS,
    Model,
    ModelOutput,
    build_baseline,
    build_fully_invres,
    build_model,
    build_partially_invres,
)
from .vae import attach_vae_branch
from .chains import ChainKind, build_chain

__all__ = [
    "Architecture",
    "ModelSpec",
    "BUILDERS",
    "Model",
    "ModelOutput",
    "build_baseline",
    "build_fully_invres",
    "build_model",
    "build_partially_invres",
    "attach_vae_branch",
    "ChainKind",
    "build_chain",
]
