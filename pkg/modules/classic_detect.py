# modules/classic_detect.py
"""Threshold baselines (CA-CFAR, Monte Carlo oracle threshold), DBSCAN
measurement clustering and the exceedance confidence mapping.

Every detector here returns :class:`Detection` objects so classical and
neural detections feed the tracker through one interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from sklearn.cluster import DBSCAN

from rdtrack.exceptions import DomainError, InsufficientClutterError, ShapeError

UNIT_NORM_TOLERANCE = 1e-9
# energies within this relative band of the threshold are ties and never fire
TIE_RTOL = 1e-12

PairOrInt = Union[int, Tuple[int, int]]


@dataclass(frozen=True)
class Detection:
    """One detection in continuous (range_bin, doppler_bin) coordinates."""

    range_bin: float
    doppler_bin: float
    confidence: float
    energy: float = 0.0
    feature: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    noise: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.range_bin) and math.isfinite(self.doppler_bin)):
            raise DomainError(f"detection bins must be finite, got ({self.range_bin}, {self.doppler_bin})")
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"detection confidence must lie in [0, 1], got {self.confidence}")
        if self.feature is not None:
            vector = np.asarray(self.feature, dtype=np.float64).reshape(-1)
            if abs(float(np.linalg.norm(vector)) - 1.0) > UNIT_NORM_TOLERANCE:
                raise DomainError("detection feature must have unit L2 norm")
            object.__setattr__(self, "feature", vector)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.range_bin, self.doppler_bin)

    def with_feature(self, feature: Optional[np.ndarray]) -> "Detection":
        return replace(self, feature=feature)

    def within(self, shape: Tuple[int, int]) -> bool:
        return 0.0 <= self.range_bin < shape[0] and 0.0 <= self.doppler_bin < shape[1]


def sort_key(det: Detection) -> Tuple[float, float, float, float]:
    """Canonical ordering used wherever results must not depend on input order."""
    return (det.range_bin, det.doppler_bin, -det.confidence, det.energy)


@dataclass(frozen=True)
class CfarConfig:
    """CA-CFAR window: training and guard cells per side, per dimension."""

    train_cells: PairOrInt = (4, 4)
    guard_cells: PairOrInt = (2, 2)
    pfa_design: float = 1e-3

    def __post_init__(self) -> None:
        train = _pair(self.train_cells)
        guard = _pair(self.guard_cells)
        if min(train) < 1:
            raise DomainError(f"train_cells must be >= 1 per side, got {self.train_cells}")
        if min(guard) < 0:
            raise DomainError(f"guard_cells must be >= 0 per side, got {self.guard_cells}")
        if not 0.0 < self.pfa_design < 1.0:
            raise DomainError(f"pfa_design must lie in (0, 1), got {self.pfa_design}")
        object.__setattr__(self, "train_cells", train)
        object.__setattr__(self, "guard_cells", guard)


def _pair(value: PairOrInt) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        first, second = value
        return (int(first), int(second))
    return (int(value), int(value))


def energy_view(rd: Any) -> np.ndarray:
    """Non-negative energy grid of an RD matrix, complex array or energy array."""
    if hasattr(rd, "energy") and callable(rd.energy):
        energy = np.asarray(rd.energy(), dtype=np.float64)
    else:
        values = np.asarray(rd)
        energy = np.abs(values) ** 2 if np.iscomplexobj(values) else values.astype(np.float64, copy=False)
    if energy.ndim != 2:
        raise ShapeError(f"energy view must be 2-D, got shape {energy.shape}")
    return energy


# ──────────────────────────────────────────────────────────────────────────────
# Уверенность
# ──────────────────────────────────────────────────────────────────────────────
def exceedance_confidence(energy: float | np.ndarray, threshold: float | np.ndarray) -> float | np.ndarray:
    """Confidence 1 - exp(-(energy/threshold - 1)) of a threshold exceedance.

    Energies at or below the threshold map to 0.
    """
    threshold_arr = np.asarray(threshold, dtype=np.float64)
    if np.any(threshold_arr <= 0):
        raise DomainError("exceedance_confidence needs a positive threshold")
    ratio = np.asarray(energy, dtype=np.float64) / threshold_arr - 1.0
    confidence = -np.expm1(-np.maximum(ratio, 0.0))
    if confidence.ndim == 0:
        return float(confidence)
    return confidence


# ──────────────────────────────────────────────────────────────────────────────
# CA-CFAR
# ──────────────────────────────────────────────────────────────────────────────
def cfar_alpha(n_train: float | np.ndarray, pfa: float) -> float | np.ndarray:
    """Exponential-noise scale factor N_t * (pfa^(-1/N_t) - 1)."""
    n = np.asarray(n_train, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = n * np.expm1(-np.log(pfa) / n)
    return float(alpha) if alpha.ndim == 0 else alpha


def training_kernel(cfg: CfarConfig) -> np.ndarray:
    """Ring of training cells around the guard block (cell under test included in the guard)."""
    (t_r, t_d), (g_r, g_d) = cfg.train_cells, cfg.guard_cells
    outer_r, outer_d = t_r + g_r, t_d + g_d
    kernel = np.ones((2 * outer_r + 1, 2 * outer_d + 1))
    kernel[t_r:t_r + 2 * g_r + 1, t_d:t_d + 2 * g_d + 1] = 0.0
    return kernel


def cfar_threshold_map(rd: Any, cfg: CfarConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-cell CA-CFAR thresholds and realized training-cell counts.

    Windows are clamped at the grid edges; cells with no training cells get
    an infinite threshold. Training sums are taken over deviations from the
    grid minimum, so a constant neighbourhood of energy u has mean exactly u.
    """
    energy = energy_view(rd)
    kernel = training_kernel(cfg)
    reference = float(energy.min()) if energy.size else 0.0
    noise_sum = ndimage.correlate(energy - reference, kernel, mode="constant", cval=0.0)
    n_train = np.rint(ndimage.correlate(np.ones_like(energy), kernel, mode="constant", cval=0.0)).astype(np.int64)

    thresholds = np.full(energy.shape, np.inf)
    for n in np.unique(n_train[n_train > 0]).tolist():
        cells = n_train == n
        mean = reference + np.maximum(noise_sum[cells], 0.0) / n
        thresholds[cells] = cfar_alpha(n, cfg.pfa_design) * mean
    return thresholds, n_train


def ca_cfar(rd: Any, cfg: CfarConfig) -> List[Detection]:
    """Cell-averaging CFAR; a cell fires iff its energy is strictly above its threshold.

    Energies within ``TIE_RTOL`` of the threshold count as ties and do not fire.
    """
    energy = energy_view(rd)
    thresholds, _ = cfar_threshold_map(energy, cfg)
    rows, cols = np.nonzero(energy > thresholds * (1.0 + TIE_RTOL))
    detections = []
    for i, j in zip(rows.tolist(), cols.tolist()):
        limit = thresholds[i, j]
        cell = float(energy[i, j])
        confidence = float(exceedance_confidence(cell, limit)) if limit > 0 else 1.0
        detections.append(Detection(float(i), float(j), confidence, cell))
    return detections


# ──────────────────────────────────────────────────────────────────────────────
# Порог Монте-Карло
# ──────────────────────────────────────────────────────────────────────────────
def truth_mask(truth: Any, shape: Tuple[int, int], radius: int = 1) -> np.ndarray:
    """Boolean mask of cells within ``radius`` of every truth position."""
    mask = np.zeros(shape, dtype=bool)
    entries = getattr(truth, "entries", truth)
    for range_bin, doppler_bin in entries:
        i = int(np.rint(range_bin))
        j = int(np.rint(doppler_bin))
        mask[max(i - radius, 0):min(i + radius + 1, shape[0]), max(j - radius, 0):min(j + radius + 1, shape[1])] = True
    return mask


def monte_carlo_threshold(rd: Any, mask: np.ndarray, pfa: float) -> float:
    """(k+1)-th largest clutter energy with k = floor(pfa * N_clutter).

    Thresholding strictly above it leaves exactly k clutter false alarms when
    the clutter energies are distinct.
    """
    if not 0.0 <= pfa < 1.0:
        raise DomainError(f"pfa must lie in [0, 1), got {pfa}")
    energy = energy_view(rd)
    if mask.shape != energy.shape:
        raise ShapeError(f"truth mask shape {mask.shape} does not match energy grid {energy.shape}")
    clutter = energy[~mask]
    k = int(math.floor(pfa * clutter.size))
    if clutter.size < k + 1 or clutter.size == 0:
        raise InsufficientClutterError(f"{clutter.size} clutter cells cannot place a threshold at pfa={pfa}")
    ordered = np.sort(clutter)[::-1]
    return float(ordered[k])


def threshold_detect(rd: Any, threshold: float) -> List[Detection]:
    """Detections at integer bin centres of every cell strictly above ``threshold``."""
    energy = energy_view(rd)
    rows, cols = np.nonzero(energy > threshold)
    cells = energy[rows, cols]
    if threshold > 0 and math.isfinite(threshold):
        confidences = exceedance_confidence(cells, threshold)
    else:
        confidences = np.ones(cells.shape)
    return [
        Detection(float(i), float(j), float(conf), float(e))
        for i, j, conf, e in zip(rows.tolist(), cols.tolist(), np.atleast_1d(confidences).tolist(), cells.tolist())
    ]


# ──────────────────────────────────────────────────────────────────────────────
# DBSCAN
# ──────────────────────────────────────────────────────────────────────────────
def dbscan_cluster(dets: Iterable[Detection], eps: float = 0.5, min_pts: int = 8) -> List[Detection]:
    """Collapse density clusters to confidence-weighted centroids.

    The centroid confidence is the largest member confidence and its energy
    the summed member energy. Noise points pass through with ``noise=True``.
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise DomainError(f"min_pts must be >= 1, got {min_pts}")
    ordered = sorted(dets, key=sort_key)
    if not ordered:
        return []

    points = np.array([d.position for d in ordered], dtype=np.float64)
    labels = DBSCAN(eps=eps, min_samples=min_pts, metric="euclidean").fit(points).labels_

    clusters: List[Detection] = []
    for label in sorted(set(labels.tolist()) - {-1}):
        members = [d for d, lab in zip(ordered, labels) if lab == label]
        clusters.append(_centroid(members))
    noise = [replace(d, noise=True) for d, lab in zip(ordered, labels) if lab == -1]
    return clusters + noise


def _centroid(members: Sequence[Detection]) -> Detection:
    weights = np.array([d.confidence for d in members])
    points = np.array([d.position for d in members])
    if weights.sum() > 0:
        center = (weights[:, None] * points).sum(axis=0) / weights.sum()
    else:
        center = points.mean(axis=0)
    return Detection(
        range_bin=float(center[0]),
        doppler_bin=float(center[1]),
        confidence=float(weights.max()),
        energy=float(sum(d.energy for d in members)),
    )
