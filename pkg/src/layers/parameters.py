"""
Parameter initialization and the `.ivparams` container.

Initialization is deterministic per parameter name: each tensor draws from
its own generator seeded with (model seed, crc32(name)), so adding a layer
never changes the values of the others.

Container layout (little-endian):

    b"IVP1" | u32 count
    per tensor: u16 name_len | name (utf-8) | u8 dtype (0=f32, 1=f64)
                | u8 rank | rank x u32 extents | payload
"""
import logging
import math
import struct
import zlib
from pathlib import Path
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from ..autodiff import Parameter
from ..tensor import Precision

logger = logging.getLogger(__name__)

MAGIC = b"IVP1"
MAX_RANK = 8
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


class ParameterFormatError(ValueError):
    """The parameter container is malformed or does not match the model."""


class Initializer:
    """Seeded parameter factory shared by the layers of one model."""

    def __init__(self, seed: int = 0, precision: Precision = Precision.F32):
        self.seed = int(seed)
        self.precision = Precision(precision)

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])

    def _param(self, name: str, data: np.ndarray) -> Parameter:
        return Parameter(name, data.astype(self.precision.dtype))

    def he_normal(self, name: str, shape: Tuple[int, ...], fan_in: int) -> Parameter:
        std = np.sqrt(2.0 / max(fan_in, 1))
        return self._param(name, self.rng(name).normal(0.0, std, size=shape))

    def zeros(self, name: str, shape: Tuple[int, ...]) -> Parameter:
        return self._param(name, np.zeros(shape))

    def ones(self, name: str, shape: Tuple[int, ...]) -> Parameter:
        return self._param(name, np.ones(shape))

    def orthogonal(self, name: str, size: int) -> Parameter:
        """Random orthogonal matrix (QR of a Gaussian, sign-corrected)."""
        g = self.rng(name).standard_normal((size, size))
        q, r = np.linalg.qr(g)
        q *= np.sign(np.diag(r))
        return self._param(name, q)

    def identity(self, name: str, size: int) -> Parameter:
        return self._param(name, np.eye(size))


def _as_mapping(params: Union[Mapping[str, Parameter], Iterable[Parameter]]) -> Dict[str, Parameter]:
    if isinstance(params, Mapping):
        return dict(params)
    return {p.name: p for p in params}


def save_parameters(params: Union[Mapping[str, Parameter], Iterable[Parameter]], path: Union[str, Path]) -> Path:
    """
    Write named tensors to an `.ivparams` file.

    Returns:
        The written path
    """
    path = Path(path)
    named = _as_mapping(params)
    chunks = [MAGIC, struct.pack("<I", len(named))]
    for name, param in named.items():
        data = param.data if isinstance(param, Parameter) else np.asarray(param)
        dtype = data.dtype.newbyteorder("<")
        if dtype not in DTYPE_CODES:
            raise ParameterFormatError(f"Cannot store '{name}' with dtype {data.dtype}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", DTYPE_CODES[dtype], data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype=dtype).tobytes())

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.info(f"Saved {len(named)} tensors to {path}")
    return path


def load_parameters(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    Read every tensor of an `.ivparams` file.

    Raises:
        FileNotFoundError: If the file does not exist
        ParameterFormatError: On bad magic or truncated content
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Parameter file not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ParameterFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")

    offset = 4

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(raw):
            raise ParameterFormatError(f"{path}: truncated at byte {offset} (needed {size} more)")
        chunk = raw[offset:offset + size]
        offset += size
        return chunk

    (count,) = struct.unpack("<I", take(4))
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParameterFormatError(f"{path}: tensor name at byte {offset - name_len} is not utf-8: {exc}")
        code, rank = struct.unpack("<BB", take(2))
        if code not in CODE_DTYPES:
            raise ParameterFormatError(f"{path}: unknown dtype code {code} for '{name}'")
        if rank > MAX_RANK:
            raise ParameterFormatError(f"{path}: invalid rank {rank} for '{name}'")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        dtype = CODE_DTYPES[code]
        size = math.prod(shape) * dtype.itemsize
        tensors[name] = np.frombuffer(take(size), dtype=dtype).reshape(shape).copy()
    if offset != len(raw):
        raise ParameterFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors


def assign_parameters(
    params: Union[Mapping[str, Parameter], Iterable[Parameter]],
    tensors: Mapping[str, np.ndarray],
    strict: bool = True,
) -> int:
    """
    Copy loaded tensors into live parameters by name.

    Returns:
        Number of parameters assigned

    Raises:
        ParameterFormatError: On missing names (strict) or shape mismatch
    """
    named = _as_mapping(params)
    if strict:
        missing = sorted(set(named) - set(tensors))
        if missing:
            raise ParameterFormatError(f"Checkpoint is missing {len(missing)} parameters, e.g. {missing[:3]}")
    assigned = 0
    for name, param in named.items():
        if name not in tensors:
            continue
        value = tensors[name]
        if value.shape != param.shape:
            raise ParameterFormatError(
                f"Parameter '{name}' has shape {tuple(param.shape)}, checkpoint has {tuple(value.shape)}"
            )
        param.assign(value.astype(param.data.dtype))
        assigned += 1
    return assigned
