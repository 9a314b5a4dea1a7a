"""
The `.ivl` volume format.

    b"IVL1" | u32 version (1) | u8 dtype (0=f32, 1=f64, 2=u8 labels)
    | u8 rank | rank x u32 extents | 3 x f32 spacing (mm) | payload

All fields and the payload are little-endian. Intensity volumes have rank 4
([C, D, H, W], float); label volumes rank 3 ([D, H, W], u8).
"""
import logging
import math
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .volume import LabelVolume, Volume

logger = logging.getLogger(__name__)

MAGIC = b"IVL1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
CODES = {dtype: code for code, dtype in DTYPES.items()}
PathLike = Union[str, Path]


class VolumeFormatError(ValueError):
    """Base class for malformed `.ivl` files."""


class BadMagicError(VolumeFormatError):
    pass


class VersionMismatchError(VolumeFormatError):
    pass


class TruncatedPayloadError(VolumeFormatError):
    pass


class ShapeDtypeError(VolumeFormatError):
    pass


def encode(array: np.ndarray, spacing) -> bytes:
    dtype = array.dtype.newbyteorder("<") if array.dtype.itemsize > 1 else array.dtype
    if dtype not in CODES:
        raise ShapeDtypeError(f"Cannot encode dtype {array.dtype}")
    header = MAGIC + struct.pack("<IBB", VERSION, CODES[dtype], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    header += struct.pack("<3f", *spacing)
    return header + np.ascontiguousarray(array, dtype=dtype).tobytes()


def decode(raw: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, Tuple[float, float, float]]:
    """
    Parse an `.ivl` byte string.

    Raises:
        BadMagicError, VersionMismatchError, TruncatedPayloadError, ShapeDtypeError
    """
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{source}: {len(raw)} bytes is shorter than the magic")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{source}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 10:
        raise TruncatedPayloadError(f"{source}: header truncated at {len(raw)} bytes")
    version, code, rank = struct.unpack_from("<IBB", raw, 4)
    if version != VERSION:
        raise VersionMismatchError(f"{source}: version {version}, this reader supports {VERSION}")
    if code not in DTYPES:
        raise ShapeDtypeError(f"{source}: unknown dtype code {code}")
    if rank < 1 or rank > 8:
        raise ShapeDtypeError(f"{source}: invalid rank {rank}")
    header_size = 10 + 4 * rank + 12
    if len(raw) < header_size:
        raise TruncatedPayloadError(f"{source}: header truncated at {len(raw)} bytes, need {header_size}")
    shape = struct.unpack_from(f"<{rank}I", raw, 10)
    if min(shape) < 1:
        raise ShapeDtypeError(f"{source}: zero extent in shape {shape}")
    spacing = struct.unpack_from("<3f", raw, 10 + 4 * rank)
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ShapeDtypeError(f"{source}: invalid spacing {spacing}")

    dtype = DTYPES[code]
    expected = math.prod(shape) * dtype.itemsize
    payload = len(raw) - header_size
    if payload < expected:
        raise TruncatedPayloadError(f"{source}: payload has {payload} bytes, shape {shape} needs {expected}")
    if payload > expected:
        raise ShapeDtypeError(f"{source}: payload has {payload} bytes, shape {shape} needs only {expected}")
    data = np.frombuffer(raw, dtype=dtype, count=expected // dtype.itemsize, offset=header_size)
    return data.reshape(shape).astype(dtype.newbyteorder("="), copy=True), tuple(float(s) for s in spacing)


def _read(path: PathLike) -> Tuple[bytes, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Volume file not found: {path}")
    return path.read_bytes(), str(path)


def write_volume(path: PathLike, volume: Volume) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(volume.data, volume.spacing))
    return path


def read_volume(path: PathLike, volume_id: Optional[str] = None) -> Volume:
    raw, source = _read(path)
    data, spacing = decode(raw, source)
    if data.ndim != 4 or data.dtype.kind != "f":
        raise ShapeDtypeError(f"{source}: expected a rank-4 float volume, got rank {data.ndim} {data.dtype}")
    return Volume(data, spacing, volume_id or Path(path).stem)


def write_labels(path: PathLike, labels: LabelVolume) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(labels.labels, labels.spacing))
    return path


def read_labels(path: PathLike, num_classes: Optional[int] = None, volume_id: Optional[str] = None) -> LabelVolume:
    """
    Read a label volume. The class count is not stored in the file; it
    defaults to max(label) + 1.
    """
    raw, source = _read(path)
    data, spacing = decode(raw, source)
    if data.ndim != 3 or data.dtype != np.uint8:
        raise ShapeDtypeError(f"{source}: expected a rank-3 u8 label volume, got rank {data.ndim} {data.dtype}")
    if num_classes is None:
        num_classes = int(data.max()) + 1
    return LabelVolume(data, num_classes, spacing, volume_id or Path(path).stem)
