"""
Synthetic multi-modal segmentation volumes.

Each volume is a background (class 0) with one random axis-aligned
ellipsoid per foreground class. Every modality renders each class at its own
base intensity, multiplied by a smooth bias field and perturbed with
Gaussian noise, so classes are learnable but not separable by one
threshold once noise is on.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .volume import LabelVolume, Volume

logger = logging.getLogger(__name__)

MIN_SIZE = 16
MAX_ATTEMPTS = 50
HISTOGRAM_BINS = 64


PRESETS: Dict[str, Dict] = {
    "iseg": {
        "num_modalities": 2,
        "num_classes": 4,
        "class_names": ["background", "csf", "gm", "wm"],
    },
    "brats": {
        "num_modalities": 4,
        "num_classes": 4,
        "class_names": ["background", "necrosis", "edema", "enhancing"],
    },
}


class SyntheticConfig(BaseModel):
    """Generator parameters (recorded verbatim in the dataset manifest)."""
    size: int = Field(32, ge=MIN_SIZE, description="Cubic volume extent")
    num_classes: int = Field(4, ge=2, le=255)
    num_modalities: int = Field(2, ge=1)
    noise_sigma: float = Field(0.1, ge=0.0)
    bias_field: float = Field(0.1, ge=0.0, lt=1.0, description="Multiplicative bias amplitude")
    spacing: float = Field(1.0, gt=0.0, description="Isotropic voxel size in mm")
    min_radius: float = Field(0.15, gt=0.0, description="Smallest ellipsoid semi-axis, fraction of size")
    max_radius: float = Field(0.3, gt=0.0, description="Largest ellipsoid semi-axis, fraction of size")
    class_names: Optional[List[str]] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check(self) -> "SyntheticConfig":
        if self.min_radius > self.max_radius:
            raise ValueError(f"min_radius {self.min_radius} exceeds max_radius {self.max_radius}")
        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise ValueError(f"{len(self.class_names)} class names for {self.num_classes} classes")
        return self

    @classmethod
    def preset(cls, name: str, **overrides) -> "SyntheticConfig":
        if name not in PRESETS:
            raise ValueError(f"Unknown preset '{name}', expected one of {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    def names(self) -> List[str]:
        return self.class_names or ["background"] + [f"class_{k}" for k in range(1, self.num_classes)]


def class_intensities(num_classes: int, num_modalities: int, rng: np.random.Generator) -> np.ndarray:
    """
    Base intensity per (modality, class): evenly spaced levels in [0.1, 0.9],
    assigned to classes by an independent permutation per modality.
    """
    levels = np.linspace(0.1, 0.9, num_classes)
    return np.stack([levels[rng.permutation(num_classes)] for _ in range(num_modalities)])


def _ellipsoid(size: int, rng: np.random.Generator, config: SyntheticConfig) -> np.ndarray:
    grid = np.arange(size) + 0.5
    center = rng.uniform(0.3, 0.7, size=3) * size
    radii = rng.uniform(config.min_radius, config.max_radius, size=3) * size
    d, h, w = np.meshgrid(grid, grid, grid, indexing="ij")
    r2 = ((d - center[0]) / radii[0]) ** 2 + ((h - center[1]) / radii[1]) ** 2 + ((w - center[2]) / radii[2]) ** 2
    return r2 <= 1.0


def _bias(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth field in [-1, 1] from one low-frequency cosine."""
    grid = (np.arange(size) + 0.5) / size
    d, h, w = np.meshgrid(grid, grid, grid, indexing="ij")
    freq = rng.uniform(0.3, 1.0, size=3)
    phase = rng.uniform(0, 2 * np.pi)
    return np.cos(2 * np.pi * (freq[0] * d + freq[1] * h + freq[2] * w) + phase)


def _labels(config: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_ATTEMPTS):
        labels = np.zeros((config.size,) * 3, dtype=np.uint8)
        for cls in range(1, config.num_classes):
            labels[_ellipsoid(config.size, rng, config)] = cls
        if np.unique(labels).size == config.num_classes:
            return labels
    raise ValueError(
        f"Could not place {config.num_classes - 1} visible ellipsoids in a {config.size}^3 volume; "
        f"increase size or radii"
    )


def render(
    labels: np.ndarray,
    base: np.ndarray,
    config: SyntheticConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Intensities [M, D, H, W] for a label map."""
    images = []
    for m in range(config.num_modalities):
        image = base[m][labels]
        if config.bias_field > 0:
            image = image * (1.0 + config.bias_field * _bias(config.size, rng))
        if config.noise_sigma > 0:
            image = image + rng.normal(0.0, config.noise_sigma, size=image.shape)
        images.append(image)
    return np.stack(images).astype(np.float32)


def generate_synthetic(
    seed: int,
    num_volumes: int,
    config: Optional[SyntheticConfig] = None,
) -> List[Tuple[Volume, LabelVolume]]:
    """
    Generate a deterministic dataset.

    Args:
        seed: Generator seed; equal seeds give bit-identical datasets
        num_volumes: Number of (image, label) pairs
        config: Generator parameters (defaults: 32^3, 4 classes, 2 modalities)

    Returns:
        List of (Volume, LabelVolume)
    """
    config = config or SyntheticConfig()
    if num_volumes < 1:
        raise ValueError(f"num_volumes must be >= 1, got {num_volumes}")
    rng = np.random.default_rng(seed)
    base = class_intensities(config.num_classes, config.num_modalities, rng)
    spacing = (config.spacing,) * 3

    dataset = []
    for index in range(num_volumes):
        volume_id = f"synthetic_{seed}_{index:03d}"
        labels = _labels(config, rng)
        data = render(labels, base, config, rng)
        dataset.append(
            (
                Volume(data, spacing, volume_id),
                LabelVolume(labels, config.num_classes, spacing, volume_id),
            )
        )
    logger.info(
        f"Generated {num_volumes} synthetic volumes ({config.size}^3, {config.num_modalities} modalities, "
        f"{config.num_classes} classes, sigma={config.noise_sigma})"
    )
    return dataset


def histogram_overlap(dataset: List[Tuple[Volume, LabelVolume]], bins: int = HISTOGRAM_BINS) -> float:
    """
    Difficulty of a dataset in [0, 1].

    Per modality, classes are ordered by mean intensity and the overlap
    coefficient sum(min(p_i, p_j)) of normalized histograms is taken for each
    neighbouring pair. The result is the mean over pairs and modalities.
    """
    modalities = dataset[0][0].channels
    num_classes = dataset[0][1].num_classes
    overlaps = []
    for m in range(modalities):
        values = np.concatenate([v.data[m].ravel() for v, _ in dataset])
        labels = np.concatenate([l.labels.ravel() for _, l in dataset])
        edges = np.histogram_bin_edges(values, bins=bins)
        hists, means = [], []
        for cls in range(num_classes):
            selected = values[labels == cls]
            if selected.size == 0:
                continue
            hist, _ = np.histogram(selected, bins=edges)
            hists.append(hist / hist.sum())
            means.append(selected.mean())
        order = np.argsort(means)
        for a, b in zip(order[:-1], order[1:]):
            overlaps.append(float(np.minimum(hists[a], hists[b]).sum()))
    return float(np.mean(overlaps)) if overlaps else 0.0
