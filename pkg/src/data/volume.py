"""
Volume containers.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..tensor import ShapeError

Spacing = Tuple[float, float, float]


def _check_spacing(spacing) -> Spacing:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"Spacing must be three positive values in mm, got {spacing}")
    return spacing


@dataclass
class Volume:
    """Multi-modal intensities [C, D, H, W]."""
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    id: str = ""

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(f"Volume data must be [C, D, H, W], got shape {tuple(self.data.shape)}")
        if self.data.dtype not in (np.float32, np.float64):
            raise ShapeError(f"Volume data must be float32 or float64, got {self.data.dtype}")
        self.spacing = _check_spacing(self.spacing)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape[1:])


@dataclass
class LabelVolume:
    """Integer class labels [D, H, W] in [0, num_classes)."""
    labels: np.ndarray
    num_classes: int
    spacing: Spacing = (1.0, 1.0, 1.0)
    id: str = ""
    _counts: List[int] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.labels.ndim != 3:
            raise ShapeError(f"Labels must be [D, H, W], got shape {tuple(self.labels.shape)}")
        if self.num_classes < 1 or self.num_classes > 256:
            raise ValueError(f"num_classes must lie in [1, 256], got {self.num_classes}")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ValueError(f"Label {int(self.labels.max())} out of range for {self.num_classes} classes")
        self.spacing = _check_spacing(self.spacing)

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return tuple(self.labels.shape)

    def mask(self, cls: int) -> np.ndarray:
        return self.labels == cls

    def class_counts(self) -> List[int]:
        if self._counts is None:
            self._counts = np.bincount(self.labels.ravel(), minlength=self.num_classes).tolist()
        return list(self._counts)
