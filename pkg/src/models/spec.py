"""
Declarative model description.
"""
from enum import Enum
from typing import List, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..tensor import Precision, ShapeError


class Architecture(str, Enum):
    BASELINE = "baseline"
    PARTIALLY_INVRES = "partially_invres"
    FULLY_INVRES = "fully_invres"


class ModelSpec(BaseModel):
    """
    Architecture hyperparameters.

    Widths double per level for the baseline and Partially-InvRes and grow
    four-fold per level for Fully-InvRes (half the channels are squeezed
    into eight times as many at the next level).
    """
    arch: Architecture = Field(Architecture.FULLY_INVRES, description="Network family")
    in_channels: int = Field(2, ge=1, description="Input modalities")
    num_classes: int = Field(4, ge=2, description="Segmentation classes including background")
    levels: int = Field(4, ge=2, description="Resolution levels")
    base_width: int = Field(16, ge=2, description="Channels at level 0")
    blocks_per_level: int = Field(2, ge=0, description="Residual/coupling blocks per level and side")
    subnet_depth: int = Field(1, ge=1, description="conv-norm-act stages per coupling subnet")
    patch_size: int = Field(32, ge=2, description="Cubic training patch extent (sizes the VAE decoder)")
    vae: bool = Field(False, description="Attach the VAE regularization branch")
    latent_dim: int = Field(64, ge=1, description="VAE latent dimension")
    vae_width: int = Field(8, ge=1, description="Channels of the VAE decoder")
    zero_init: bool = Field(True, description="Zero-init final subnet convs and the head")
    seed: int = Field(0, description="Parameter initialization seed")
    precision: Precision = Field(Precision.F32, description="Tensor precision")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_widths(self) -> "ModelSpec":
        if self.base_width % 2:
            raise ValueError(f"base_width must be even for coupling splits, got {self.base_width}")
        if self.patch_size % (2 ** self.levels):
            raise ValueError(
                f"patch_size {self.patch_size} is not divisible by 2^levels = {2 ** self.levels}"
            )
        return self

    @property
    def growth(self) -> int:
        return 4 if self.arch is Architecture.FULLY_INVRES else 2

    def widths(self) -> List[int]:
        """Encoder channel count at each level."""
        return [self.base_width * self.growth ** level for level in range(self.levels)]

    def deepest_extent(self, patch: int) -> int:
        return patch // 2 ** (self.levels - 1)

    def check_input(self, spatial: Sequence[int]) -> None:
        """
        Raises:
            ShapeError: If a spatial extent is not divisible by 2^levels
        """
        step = 2 ** self.levels
        if any(s % step for s in spatial):
            raise ShapeError(f"Input extents {tuple(spatial)} must be divisible by 2^levels = {step}")
