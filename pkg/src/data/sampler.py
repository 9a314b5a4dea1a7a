"""
Random patch extraction and background prefetching.

A patch is addressed by its corner; its center voxel is corner + size // 2.
"""
import logging
import queue
import threading
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..tensor import ShapeError
from .volume import LabelVolume, Volume

logger = logging.getLogger(__name__)

Patch = Tuple[np.ndarray, np.ndarray]
Corner = Tuple[int, int, int]


class SamplingStrategy(str, Enum):
    UNIFORM = "uniform"
    CLASS_BALANCED = "class_balanced"


class SamplerConfig(BaseModel):
    patch_size: int = Field(32, ge=1, description="Cubic patch extent")
    strategy: SamplingStrategy = Field(SamplingStrategy.CLASS_BALANCED)
    seed: int = Field(0, description="Sampler seed")

    model_config = ConfigDict(extra="forbid")


class PatchSampler:
    """
    Deterministic sequential patch sampler.

    Class-balanced sampling picks the target class uniformly among the
    classes that occur at some valid patch center, then a uniformly random
    valid center of that class.
    """

    def __init__(
        self,
        patch_size: int,
        seed: int = 0,
        strategy: SamplingStrategy = SamplingStrategy.CLASS_BALANCED,
    ):
        if patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {patch_size}")
        self.patch_size = patch_size
        self.seed = seed
        self.strategy = SamplingStrategy(strategy)
        self.rng = np.random.default_rng(seed)
        self._centers: Dict[Tuple[str, Tuple[int, ...]], List[np.ndarray]] = {}

    @classmethod
    def from_config(cls, config: SamplerConfig) -> "PatchSampler":
        return cls(config.patch_size, config.seed, config.strategy)

    def _check(self, shape: Sequence[int]) -> None:
        if any(self.patch_size > s for s in shape):
            raise ShapeError(f"Patch size {self.patch_size} exceeds volume extents {tuple(shape)}")

    def _class_centers(self, labels: LabelVolume) -> List[np.ndarray]:
        """Flat indices of valid centers, one array per class."""
        key = (labels.id, labels.spatial_shape)
        cached = self._centers.get(key)
        if cached is not None:
            return cached
        half = self.patch_size // 2
        valid = np.zeros(labels.spatial_shape, dtype=bool)
        valid[tuple(slice(half, s - self.patch_size + half + 1) for s in labels.spatial_shape)] = True
        flat_labels = labels.labels.ravel()
        flat_valid = valid.ravel()
        centers = [np.flatnonzero(flat_valid & (flat_labels == cls)) for cls in range(labels.num_classes)]
        if labels.id:
            self._centers[key] = centers
        return centers

    def corner(self, labels: LabelVolume) -> Corner:
        """Draw the corner of the next patch."""
        shape = labels.spatial_shape
        self._check(shape)
        if self.strategy is SamplingStrategy.UNIFORM:
            return tuple(int(self.rng.integers(0, s - self.patch_size + 1)) for s in shape)

        centers = self._class_centers(labels)
        present = [cls for cls, idx in enumerate(centers) if idx.size]
        cls = present[int(self.rng.integers(len(present)))]
        flat = int(centers[cls][self.rng.integers(centers[cls].size)])
        center = np.unravel_index(flat, shape)
        half = self.patch_size // 2
        return tuple(int(c) - half for c in center)

    def extract(self, volume: Volume, labels: LabelVolume, corner: Corner) -> Patch:
        p = self.patch_size
        window = tuple(slice(c, c + p) for c in corner)
        image = np.ascontiguousarray(volume.data[(slice(None),) + window])
        return image, np.ascontiguousarray(labels.labels[window])

    def sample(self, volume: Volume, labels: LabelVolume) -> Patch:
        if volume.spatial_shape != labels.spatial_shape:
            raise ShapeError(
                f"Volume {volume.spatial_shape} and labels {labels.spatial_shape} differ in extent"
            )
        return self.extract(volume, labels, self.corner(labels))


def sample_patches(volume: Volume, labels: LabelVolume, sampler: PatchSampler, n: int) -> List[Patch]:
    """Draw n (image [C, p, p, p], labels [p, p, p]) pairs."""
    return [sampler.sample(volume, labels) for _ in range(n)]


def sample_batch(
    dataset: Sequence[Tuple[Volume, LabelVolume]],
    sampler: PatchSampler,
    batch_size: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """A batch [B, C, p, p, p] / [B, p, p, p] from uniformly chosen volumes."""
    images, labels = [], []
    for _ in range(batch_size):
        volume, label = dataset[int(sampler.rng.integers(len(dataset)))]
        image, lab = sampler.sample(volume, label)
        images.append(image)
        labels.append(lab)
    return np.stack(images), np.stack(labels)


class PatchPrefetcher:
    """
    Fills a bounded queue with batches from a worker thread.

    One seeded sampler feeds one prefetcher, so the batch sequence is the
    same as calling sample_batch in the foreground.
    """

    _DONE = object()

    def __init__(
        self,
        dataset: Sequence[Tuple[Volume, LabelVolume]],
        sampler: PatchSampler,
        batch_size: int = 1,
        num_batches: Optional[int] = None,
        max_queued: int = 4,
    ):
        if not dataset:
            raise ValueError("Cannot prefetch from an empty dataset")
        self.dataset = dataset
        self.sampler = sampler
        self.batch_size = batch_size
        self.num_batches = num_batches
        self._queue: "queue.Queue" = queue.Queue(maxsize=max_queued)
        self._stop = threading.Event()
        self._error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._run, name="patch-prefetcher", daemon=True)
        self._started = False

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self) -> None:
        produced = 0
        try:
            while not self._stop.is_set() and (self.num_batches is None or produced < self.num_batches):
                if not self._put(sample_batch(self.dataset, self.sampler, self.batch_size)):
                    return
                produced += 1
        except BaseException as exc:
            logger.error(f"Patch prefetcher failed: {exc}", exc_info=True)
            self._error = exc
        self._put(self._DONE)

    def start(self) -> "PatchPrefetcher":
        if not self._started:
            self._started = True
            self._thread.start()
        return self

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        self.start()
        while True:
            item = self._queue.get()
            if item is self._DONE:
                if self._error is not None:
                    raise self._error
                return
            yield item

    def next_batch(self) -> Tuple[np.ndarray, np.ndarray]:
        self.start()
        item = self._queue.get()
        if item is self._DONE:
            if self._error is not None:
                raise self._error
            raise StopIteration("Prefetcher exhausted")
        return item

    def close(self) -> None:
        self._stop.set()
        if self._started:
            self._thread.join(timeout=5.0)

    def __enter__(self) -> "PatchPrefetcher":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()
