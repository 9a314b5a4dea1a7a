"""
On-disk synthetic datasets.

A dataset directory holds one `<id>_image.ivl` / `<id>_labels.ivl` pair per
volume and a `manifest.json` describing the generator, the split and the
measured difficulty.
"""
import json
import logging
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, Field
from tqdm import tqdm

from .synthetic import SyntheticConfig, generate_synthetic, histogram_overlap
from .volume import LabelVolume, Volume
from .volume_io import read_labels, read_volume, write_labels, write_volume

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

Dataset = List[Tuple[Volume, LabelVolume]]


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class ManifestEntry(BaseModel):
    id: str
    image: str
    labels: str
    split: Split
    class_counts: List[int]


class DatasetManifest(BaseModel):
    """Everything needed to reload and describe a generated dataset."""
    name: str
    preset: Optional[str] = None
    seed: int
    generator: SyntheticConfig
    class_names: List[str]
    histogram_overlap: float = Field(..., ge=0.0, le=1.0)
    created_at: str
    entries: List[ManifestEntry]

    @property
    def num_classes(self) -> int:
        return self.generator.num_classes

    def ids(self, split: Optional[Split] = None) -> List[str]:
        return [e.id for e in self.entries if split is None or e.split is split]


def write_dataset(
    out_dir: Union[str, Path],
    seed: int,
    num_volumes: int,
    config: Optional[SyntheticConfig] = None,
    test_fraction: float = 0.25,
    preset: Optional[str] = None,
    show_progress: bool = True,
) -> DatasetManifest:
    """
    Generate a synthetic dataset and write it with its manifest.

    The last round(test_fraction * num_volumes) volumes form the test split
    (at least one when num_volumes > 1).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = config or (SyntheticConfig.preset(preset) if preset else SyntheticConfig())
    dataset = generate_synthetic(seed, num_volumes, config)

    num_test = 0
    if num_volumes > 1:
        num_test = min(num_volumes - 1, max(1, round(test_fraction * num_volumes)))

    entries = []
    for index, (volume, labels) in enumerate(tqdm(dataset, desc="Writing volumes", disable=not show_progress)):
        image_name = f"{volume.id}_image.ivl"
        label_name = f"{volume.id}_labels.ivl"
        write_volume(out_dir / image_name, volume)
        write_labels(out_dir / label_name, labels)
        entries.append(
            ManifestEntry(
                id=volume.id,
                image=image_name,
                labels=label_name,
                split=Split.TEST if index >= num_volumes - num_test else Split.TRAIN,
                class_counts=labels.class_counts(),
            )
        )

    manifest = DatasetManifest(
        name=out_dir.name,
        preset=preset,
        seed=seed,
        generator=config,
        class_names=config.names(),
        histogram_overlap=histogram_overlap(dataset),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        entries=entries,
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(
        f"✅ Wrote dataset '{manifest.name}' to {out_dir}: {num_volumes} volumes "
        f"({num_test} test), histogram overlap {manifest.histogram_overlap:.3f}"
    )
    return manifest


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Read a manifest from a dataset directory or the manifest file itself."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"Dataset manifest not found: {path}")
    return DatasetManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))


def load_dataset(path: Union[str, Path], split: Optional[Split] = None) -> Tuple[DatasetManifest, Dataset]:
    """
    Load the volumes of a dataset directory.

    Args:
        path: Dataset directory (or its manifest.json)
        split: Only this split when given

    Returns:
        (manifest, list of (Volume, LabelVolume))
    """
    path = Path(path)
    root = path if path.is_dir() else path.parent
    manifest = read_manifest(path)
    dataset: Dataset = []
    for entry in manifest.entries:
        if split is not None and entry.split is not split:
            continue
        volume = read_volume(root / entry.image, entry.id)
        labels = read_labels(root / entry.labels, manifest.num_classes, entry.id)
        dataset.append((volume, labels))
    logger.info(f"Loaded {len(dataset)} volumes from {root}" + (f" ({split.value})" if split else ""))
    return manifest, dataset
