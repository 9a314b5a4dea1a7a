"""
Data plane for INVSEG.

This package provides:
- Volume / LabelVolume containers and the `.ivl` binary format
- A deterministic synthetic volume generator with presets
- Patch sampling (uniform or class-balanced) and background prefetching
- Dataset directories with a JSON manifest
"""
from .volume import LabelVolume, Volume
from .volume_io import (
    BadMagicError,
    ShapeDtypeError,
    TruncatedPayloadError,
    VersionMismatchError,
    VolumeFormatError,
    read_labels,
    read_volume,
    write_labels,
    write_volume,
)
from .synthetic import PRESETS, SyntheticConfig, class_intensities, generate_synthetic, histogram_overlap
from .sampler import (
    PatchPrefetcher,
    PatchSampler,
    SamplerConfig,
    SamplingStrategy,
    sample_batch,
    sample_patches,
)
from .manifest import DatasetManifest, ManifestEntry, Split, load_dataset, read_manifest, write_dataset

__all__ = [
    "LabelVolume",
    "Volume",
    "BadMagicError",
    "ShapeDtypeError",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "VolumeFormatError",
    "read_labels",
    "read_volume",
    "write_labels",
    "write_volume",
    "PRESETS",
    "SyntheticConfig",
    "class_intensities",
    "generate_synthetic",
    "histogram_overlap",
    "PatchPrefetcher",
    "PatchSampler",
    "SamplerConfig",
    "SamplingStrategy",
    "sample_batch",
    "sample_patches",
    "DatasetManifest",
    "ManifestEntry",
    "Split",
    "load_dataset",
    "read_manifest",
    "write_dataset",
]
