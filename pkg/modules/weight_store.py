# modules/weight_store.py
"""INDTW1 weight files.

Layout (little-endian): ``b"INDTW1"``, uint32 array count, then per array
uint32 name length, UTF-8 name, uint32 rank, rank x uint32 dims and the
float64 values in C order.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from modules.neural_detect import ARCHITECTURE, WeightSet
from rdtrack.exceptions import WeightFileError

MAGIC = b"INDTW1"
_U32 = struct.Struct("<I")

PathLike = Union[str, Path]


def write_weights(weights: Union[WeightSet, Mapping[str, np.ndarray]], path: PathLike) -> Path:
    arrays = weights.params if isinstance(weights, WeightSet) else weights
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, _U32.pack(len(arrays))]
    for name, value in arrays.items():
        array = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(dim) for dim in array.shape)
        chunks.append(np.ascontiguousarray(array).tobytes())
    target.write_bytes(b"".join(chunks))
    return target


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise WeightFileError(f"{self.source}: truncated weight file at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset


def read_weights(path: PathLike) -> Dict[str, np.ndarray]:
    """All named arrays of a weight file, in file order."""
    source = Path(path)
    if not source.exists():
        raise WeightFileError(f"weight file not found: {source}")
    reader = _Reader(source.read_bytes(), str(source))
    if reader.take(len(MAGIC)) != MAGIC:
        raise WeightFileError(f"{source}: not an INDTW1 weight file (bad magic)")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFileError(f"{source}: array name is not valid UTF-8") from exc
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = math.prod(shape)
        if 8 * count > reader.remaining:
            raise WeightFileError(
                f"{source}: array '{name}' declares shape {shape} ({8 * count} bytes) "
                f"but only {reader.remaining} bytes remain"
            )
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
        if name in arrays:
            raise WeightFileError(f"{source}: array '{name}' appears twice")
        arrays[name] = values.astype(np.float64)
    if reader.remaining:
        raise WeightFileError(f"{source}: {reader.remaining} trailing bytes")
    return arrays


def load_weight_set(path: PathLike) -> WeightSet:
    """Detector weights checked against the architecture."""
    weights = WeightSet(read_weights(path))
    missing = weights.missing()
    if missing:
        raise WeightFileError(f"{path}: missing detector arrays: {', '.join(missing)}")
    mismatched = weights.mismatched()
    if mismatched:
        details = ", ".join(f"{n} {weights[n].shape} != {ARCHITECTURE[n][0]}" for n in mismatched)
        raise WeightFileError(f"{path}: shape mismatch: {details}")
    return weights
