"""
Full-volume inference and segmentation metrics.

Volumes are covered by cubic windows at stride patch_size / 2 (the last
window along each axis is pinned to the far edge); overlapping class
probabilities are averaged before the argmax.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_serializer
from tqdm import tqdm

from ..data import LabelVolume, PatchSampler, SamplingStrategy, Volume
from ..losses import dice_score, hausdorff_distance
from ..models import Model
from ..tensor import ShapeError
from ..utils import get_settings

logger = logging.getLogger(__name__)

Corner = Tuple[int, int, int]


class ClassMetrics(BaseModel):
    name: str
    dice: float = Field(..., ge=0.0, le=1.0)
    hausdorff: Optional[float] = Field(None, description="mm; None when undefined")

    @field_serializer("hausdorff")
    def _serialize_hausdorff(self, value: Optional[float]):
        return "undefined" if value is None else value


class VolumeMetrics(BaseModel):
    id: str
    classes: List[ClassMetrics]

    @property
    def mean_dice(self) -> float:
        return float(np.mean([c.dice for c in self.classes])) if self.classes else 0.0


class EvaluationReport(BaseModel):
    """Per-class metrics, per volume and averaged over volumes."""
    model: str
    num_windows: int = 0
    volumes: List[VolumeMetrics] = Field(default_factory=list)
    classes: List[ClassMetrics] = Field(default_factory=list)

    @property
    def mean_dice(self) -> float:
        """Mean foreground Dice over classes."""
        return float(np.mean([c.dice for c in self.classes])) if self.classes else 0.0

    def to_text(self) -> str:
        lines = [f"Model: {self.model}", f"Volumes: {len(self.volumes)}, windows: {self.num_windows}"]
        lines.append(f"{'class':<16}{'dice':>10}{'hausdorff':>12}")
        for c in self.classes:
            hd = "undefined" if c.hausdorff is None else f"{c.hausdorff:.3f}"
            lines.append(f"{c.name:<16}{c.dice:>10.4f}{hd:>12}")
        lines.append(f"{'mean':<16}{self.mean_dice:>10.4f}")
        return "\n".join(lines)


def _class_name(cls: int, class_names: Optional[Sequence[str]]) -> str:
    if class_names and cls < len(class_names):
        return class_names[cls]
    return f"class_{cls}"


def evaluate_labels(
    pred: np.ndarray,
    target: np.ndarray,
    num_classes: int,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
    class_names: Optional[Sequence[str]] = None,
    volume_id: str = "",
) -> VolumeMetrics:
    """Dice and Hausdorff for every foreground class of one label map."""
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    classes = []
    for cls in range(1, num_classes):
        p, t = pred == cls, target == cls
        classes.append(
            ClassMetrics(
                name=_class_name(cls, class_names),
                dice=dice_score(p, t),
                hausdorff=hausdorff_distance(p, t, spacing),
            )
        )
    return VolumeMetrics(id=volume_id, classes=classes)


def aggregate(
    model: str,
    volumes: List[VolumeMetrics],
    num_windows: int = 0,
) -> EvaluationReport:
    """Average each class over volumes; Hausdorff over the volumes where it is defined."""
    classes: List[ClassMetrics] = []
    if volumes:
        for k, first in enumerate(volumes[0].classes):
            dices = [v.classes[k].dice for v in volumes]
            distances = [v.classes[k].hausdorff for v in volumes if v.classes[k].hausdorff is not None]
            classes.append(
                ClassMetrics(
                    name=first.name,
                    dice=float(np.mean(dices)),
                    hausdorff=float(np.mean(distances)) if distances else None,
                )
            )
    return EvaluationReport(model=model, num_windows=num_windows, volumes=volumes, classes=classes)


# ============================================
# Sliding-window inference
# ============================================

def _axis_starts(extent: int, patch: int, stride: int) -> List[int]:
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] != extent - patch:
        starts.append(extent - patch)
    return starts


def sliding_windows(shape: Sequence[int], patch: int, stride: Optional[int] = None) -> List[Corner]:
    """Window corners covering the volume, in row-major order."""
    stride = stride or max(1, patch // 2)
    if any(patch > s for s in shape):
        raise ShapeError(f"Patch size {patch} exceeds volume extents {tuple(shape)}")
    return [tuple(c) for c in product(*(_axis_starts(s, patch, stride) for s in shape))]


def predict_volume(
    model: Model,
    volume: Volume,
    stride: Optional[int] = None,
    num_threads: Optional[int] = None,
    show_progress: bool = False,
) -> Tuple[np.ndarray, int]:
    """
    Averaged class probabilities [K, D, H, W] for a whole volume.

    Windows may run on several threads; their results are accumulated in
    window order, so the output does not depend on num_threads.

    Returns:
        (probabilities, number of windows)
    """
    if volume.channels != model.spec.in_channels:
        raise ShapeError(f"Volume has {volume.channels} channels, model expects {model.spec.in_channels}")
    patch = model.spec.patch_size
    corners = sliding_windows(volume.spatial_shape, patch, stride)
    dtype = model.spec.precision.dtype
    data = volume.data.astype(dtype, copy=False)

    def infer(corner: Corner) -> np.ndarray:
        window = (slice(None),) + tuple(slice(c, c + patch) for c in corner)
        return model.predict(np.ascontiguousarray(data[window])[None])[0]

    threads = num_threads or get_settings().num_threads
    totals = np.zeros((model.spec.num_classes,) + volume.spatial_shape, dtype=np.float64)
    counts = np.zeros(volume.spatial_shape, dtype=np.float64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = pool.map(infer, corners)
        for corner, probs in tqdm(zip(corners, results), total=len(corners), desc=f"Windows {volume.id}", disable=not show_progress):
            window = tuple(slice(c, c + patch) for c in corner)
            totals[(slice(None),) + window] += probs
            counts[window] += 1.0
    return totals / counts, len(corners)


def evaluate(
    model: Model,
    dataset: Sequence[Tuple[Volume, LabelVolume]],
    stride: Optional[int] = None,
    num_threads: Optional[int] = None,
    class_names: Optional[Sequence[str]] = None,
    show_progress: Optional[bool] = None,
) -> EvaluationReport:
    """
    Sliding-window segmentation of each volume scored per foreground class.

    Args:
        model: Trained or loaded model
        dataset: (Volume, LabelVolume) pairs
        stride: Window stride (patch_size // 2 by default)
        num_threads: Inference threads (settings.num_threads by default)
        class_names: Names for the report (class_1, ... otherwise)

    Returns:
        EvaluationReport with per-volume and averaged metrics
    """
    if not dataset:
        raise ValueError("Cannot evaluate on an empty dataset")
    show = get_settings().show_progress if show_progress is None else show_progress
    volumes: List[VolumeMetrics] = []
    windows = 0
    for volume, labels in tqdm(dataset, desc="Evaluating", disable=not show):
        probs, n = predict_volume(model, volume, stride, num_threads)
        windows += n
        pred = probs.argmax(axis=0).astype(np.uint8)
        volumes.append(
            evaluate_labels(pred, labels.labels, model.spec.num_classes, labels.spacing, class_names, volume.id)
        )
    report = aggregate(model.name, volumes, windows)
    logger.info(f"Evaluated {len(volumes)} volumes ({windows} windows): mean foreground Dice {report.mean_dice:.4f}")
    return report


def evaluate_patches(
    model: Model,
    dataset: Sequence[Tuple[Volume, LabelVolume]],
    num_patches: int,
    seed: int = 0,
    class_names: Optional[Sequence[str]] = None,
) -> EvaluationReport:
    """Score model predictions on class-balanced patches drawn from held-out volumes."""
    if not dataset:
        raise ValueError("Cannot evaluate on an empty dataset")
    sampler = PatchSampler(model.spec.patch_size, seed, SamplingStrategy.CLASS_BALANCED)
    dtype = model.spec.precision.dtype
    volumes: List[VolumeMetrics] = []
    for i in range(num_patches):
        volume, labels = dataset[i % len(dataset)]
        image, target = sampler.sample(volume, labels)
        probs = model.predict(image.astype(dtype, copy=False)[None])[0]
        pred = probs.argmax(axis=0).astype(np.uint8)
        volumes.append(
            evaluate_labels(pred, target, model.spec.num_classes, labels.spacing, class_names, f"{volume.id}#{i}")
        )
    return aggregate(model.name, volumes, num_patches)
