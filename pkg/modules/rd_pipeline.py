# modules/rd_pipeline.py
"""Classical Range-Doppler chain: pulse compression, coherent integration,
three-channel model input, bin conversion and RDM/truth persistence.

DFT convention: unitary (``norm="ortho"``) in both dimensions, rectangular
window, circular correlation.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from modules.signal_sim import SPEED_OF_LIGHT, RadarParams, RawEchoMatrix, TargetState, reference_chirp
from rdtrack.exceptions import (
    BadMagicError,
    DataError,
    DimensionOverflowError,
    OutOfRangeError,
    RdmFormatError,
    ShapeError,
    TruncatedFileError,
)

RDM_MAGIC = b"RDM1"
RDM_HEADER = struct.Struct("<4sII")
MAX_RDM_CELLS = 1 << 28
TRUTH_HEADER = ("frame_index", "range_bin", "doppler_bin")

PathLike = Union[str, Path]


@dataclass
class RDMatrix:
    """R x D complex Range-Doppler cells (R = M range bins, D = L Doppler bins)."""

    cells: np.ndarray
    params: RadarParams | None = None

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.complex128)
        if self.cells.ndim != 2:
            raise ShapeError(f"RD matrix must be 2-D, got shape {self.cells.shape}")
        if self.params is not None and self.cells.shape != (self.params.M, self.params.L):
            raise ShapeError(f"RD matrix shape {self.cells.shape} does not match (M, L) of its radar parameters")
        if not np.all(np.isfinite(self.cells)):
            raise DataError("RD matrix contains non-finite values")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape  # type: ignore[return-value]

    def energy(self) -> np.ndarray:
        return self.cells.real ** 2 + self.cells.imag ** 2


@dataclass
class RDTensor:
    """Three normalized channels (|x|, Re x, Im x), channel-last: R x D x 3."""

    channels: np.ndarray
    energy_map: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.channels.shape[:2]  # type: ignore[return-value]


@dataclass
class GroundTruthFrame:
    """Continuous (range_bin, doppler_bin) truth positions of one frame."""

    entries: List[Tuple[float, float]] = field(default_factory=list)
    frame_index: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def check_grid(self, shape: Tuple[int, int]) -> None:
        for range_bin, doppler_bin in self.entries:
            if not (0.0 <= range_bin < shape[0] and 0.0 <= doppler_bin < shape[1]):
                raise OutOfRangeError(f"truth ({range_bin}, {doppler_bin}) outside grid {shape}")


# ──────────────────────────────────────────────────────────────────────────────
# Обработка
# ──────────────────────────────────────────────────────────────────────────────
def matched_filter(params: RadarParams) -> np.ndarray:
    """Phase-only conjugate reference spectrum (unit magnitude, length M)."""
    spectrum = sp_fft.fft(reference_chirp(params), norm="ortho")
    magnitude = np.abs(spectrum)
    return np.conj(spectrum) / np.where(magnitude > 0, magnitude, 1.0)


def pulse_compress(raw: RawEchoMatrix) -> np.ndarray:
    """Circular matched filtering of every pulse column against the reference chirp.

    The filter has unit magnitude in frequency, so per-column energy is
    preserved; a pulse delayed by d samples peaks at range bin d.
    """
    params = raw.params
    if raw.samples.shape != (params.M, params.L):
        raise ShapeError(f"echo shape {raw.samples.shape} does not match (M, L) = {(params.M, params.L)}")
    spectrum = sp_fft.fft(raw.samples, axis=0, norm="ortho")
    return sp_fft.ifft(spectrum * matched_filter(params)[:, None], axis=0, norm="ortho")


def coherent_integrate(compressed: np.ndarray, params: RadarParams | None = None) -> RDMatrix:
    """Unitary slow-time DFT per range bin, zero Doppler at column D // 2."""
    spectrum = sp_fft.fftshift(sp_fft.fft(compressed, axis=1, norm="ortho"), axes=1)
    return RDMatrix(spectrum, params)


def inverse_integrate(rd: RDMatrix) -> np.ndarray:
    """Exact inverse of :func:`coherent_integrate`."""
    return sp_fft.ifft(sp_fft.ifftshift(rd.cells, axes=1), axis=1, norm="ortho")


def range_doppler(raw: RawEchoMatrix) -> RDMatrix:
    return coherent_integrate(pulse_compress(raw), raw.params)


def _min_max(channel: np.ndarray) -> np.ndarray:
    low = channel.min()
    high = channel.max()
    if not high > low:
        return np.zeros_like(channel)
    return (channel - low) / (high - low)


def three_channel(rd: RDMatrix | np.ndarray) -> RDTensor:
    """Amplitude, real and imaginary channels, each min-max normalized over the frame."""
    cells = rd.cells if isinstance(rd, RDMatrix) else np.asarray(rd, dtype=np.complex128)
    stacked = np.stack([_min_max(np.abs(cells)), _min_max(cells.real), _min_max(cells.imag)], axis=-1)
    energy = cells.real ** 2 + cells.imag ** 2
    return RDTensor(np.clip(stacked, 0.0, 1.0), energy)


# ──────────────────────────────────────────────────────────────────────────────
# Перевод бинов
# ──────────────────────────────────────────────────────────────────────────────
def bin_of(range_m, velocity, params: RadarParams):
    """Continuous (range_bin, doppler_bin) of a physical (range, velocity).

    Works on scalars and arrays; anything outside [0, M) x [0, L) raises
    :class:`OutOfRangeError`.
    """
    range_arr = np.asarray(range_m, dtype=np.float64)
    velocity_arr = np.asarray(velocity, dtype=np.float64)
    range_bin = 2.0 * range_arr * params.fs / SPEED_OF_LIGHT
    doppler_freq = 2.0 * params.f0 * velocity_arr / SPEED_OF_LIGHT
    doppler_bin = params.center_doppler_bin + doppler_freq * params.L * params.T

    inside = (range_bin >= 0) & (range_bin < params.M) & (doppler_bin >= 0) & (doppler_bin < params.L)
    if not np.all(inside):
        raise OutOfRangeError(
            f"(range, velocity) outside the unambiguous extent [0, {params.max_range:.6g}) m x "
            f"[-{params.max_velocity:.6g}, {params.max_velocity:.6g}) m/s"
        )
    if range_bin.ndim == 0:
        return float(range_bin), float(doppler_bin)
    return range_bin, doppler_bin


def phys_of(range_bin, doppler_bin, params: RadarParams):
    """Inverse of :func:`bin_of`: (range m, velocity m/s)."""
    range_arr = np.asarray(range_bin, dtype=np.float64)
    doppler_arr = np.asarray(doppler_bin, dtype=np.float64)
    range_m = range_arr * SPEED_OF_LIGHT / (2.0 * params.fs)
    doppler_freq = (doppler_arr - params.center_doppler_bin) / (params.L * params.T)
    velocity = doppler_freq * SPEED_OF_LIGHT / (2.0 * params.f0)
    if range_m.ndim == 0:
        return float(range_m), float(velocity)
    return range_m, velocity


def truth_frame(targets: Sequence[TargetState], params: RadarParams, frame: int = 0) -> GroundTruthFrame:
    return GroundTruthFrame([bin_of(t.range, t.velocity, params) for t in targets], frame)


# ──────────────────────────────────────────────────────────────────────────────
# Формат RDM
# ──────────────────────────────────────────────────────────────────────────────
def write_rdm(rd: RDMatrix, path: PathLike) -> Path:
    """Write ``RDM1`` + <R, D> (uint32 LE) + interleaved (re, im) float64 LE."""
    target = Path(path)
    rows, cols = rd.shape
    body = np.empty((rows, cols, 2), dtype="<f8")
    body[..., 0] = rd.cells.real
    body[..., 1] = rd.cells.imag
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("wb") as handle:
        handle.write(RDM_HEADER.pack(RDM_MAGIC, rows, cols))
        handle.write(body.tobytes(order="C"))
    return target


def read_rdm(path: PathLike, params: RadarParams | None = None) -> RDMatrix:
    data = Path(path).read_bytes()
    if len(data) < len(RDM_MAGIC) or data[:len(RDM_MAGIC)] != RDM_MAGIC:
        raise BadMagicError(f"{path}: not an RDM file (bad magic)")
    if len(data) < RDM_HEADER.size:
        raise TruncatedFileError(f"{path}: truncated header")
    _, rows, cols = RDM_HEADER.unpack_from(data)
    if rows == 0 or cols == 0 or rows * cols > MAX_RDM_CELLS:
        raise DimensionOverflowError(f"{path}: header declares unsupported dimensions {rows} x {cols}")
    expected = RDM_HEADER.size + rows * cols * 16
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: header declares {rows} x {cols} cells but the file holds fewer")
    if len(data) > expected:
        raise RdmFormatError(f"{path}: {len(data) - expected} trailing bytes after the declared cells")
    body = np.frombuffer(data, dtype="<f8", offset=RDM_HEADER.size).reshape(rows, cols, 2)
    cells = body[..., 0] + 1j * body[..., 1]
    return RDMatrix(cells, params)


# ──────────────────────────────────────────────────────────────────────────────
# Истина
# ──────────────────────────────────────────────────────────────────────────────
def write_truth(frames: Iterable[GroundTruthFrame], path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRUTH_HEADER)
        for frame in frames:
            for range_bin, doppler_bin in frame.entries:
                writer.writerow([frame.frame_index, repr(float(range_bin)), repr(float(doppler_bin))])
    return target


def read_truth(path: PathLike, frames: int | None = None) -> Dict[int, GroundTruthFrame]:
    """Truth per frame index; frames without lines come back empty when ``frames`` is given."""
    result: Dict[int, GroundTruthFrame] = {}
    if frames is not None:
        result = {i: GroundTruthFrame([], i) for i in range(frames)}
    source = Path(path)
    if not source.exists():
        raise DataError(f"truth file not found: {source}")
    with source.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRUTH_HEADER:
            raise DataError(f"{source}: expected header {','.join(TRUTH_HEADER)}")
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                index, range_bin, doppler_bin = int(row[0]), float(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{source}:{number}: malformed truth line {row!r}") from exc
            result.setdefault(index, GroundTruthFrame([], index)).entries.append((range_bin, doppler_bin))
    return result
