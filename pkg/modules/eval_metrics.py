# modules/eval_metrics.py
"""Detection (Pd / Pfa) and tracking (OSPA) scores plus series summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from modules.classic_detect import Detection
from modules.tracker import assign
from rdtrack.exceptions import DataError, DomainError


@dataclass(frozen=True)
class OspaParams:
    c: float = 5.0
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise DomainError(f"OSPA cut-off must be positive, got {self.c}")
        if self.p < 1:
            raise DomainError(f"OSPA order must be >= 1, got {self.p}")


@dataclass(frozen=True)
class OspaComponents:
    total: float
    localization: float
    cardinality: float


def _as_points(points: Any) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim > 1 else 1)
    if arr.ndim == 1:
        return arr[:, None]
    return arr


def ospa_components(X: Any, Y: Any, params: OspaParams = OspaParams()) -> OspaComponents:
    """OSPA distance with its localization and cardinality parts.

    With m = |X| <= n = |Y| the m-to-n assignment is solved exactly on an
    n x n matrix whose padding rows cost c^p.
    """
    x_pts = _as_points(X)
    y_pts = _as_points(Y)
    if len(x_pts) > len(y_pts):
        x_pts, y_pts = y_pts, x_pts
    m, n = len(x_pts), len(y_pts)
    if n == 0:
        return OspaComponents(0.0, 0.0, 0.0)
    if m and x_pts.shape[1] != y_pts.shape[1]:
        raise DomainError(f"point sets have different dimensions: {x_pts.shape[1]} vs {y_pts.shape[1]}")

    c, p = params.c, params.p
    cost = np.full((n, n), c ** p)
    if m:
        cost[:m] = np.minimum(cdist(x_pts, y_pts), c) ** p
    rows, cols = linear_sum_assignment(cost)
    local = float(cost[rows[:m], cols[:m]].sum()) if m else 0.0
    card = c ** p * (n - m)
    return OspaComponents(
        total=((local + card) / n) ** (1.0 / p),
        localization=(local / n) ** (1.0 / p),
        cardinality=(card / n) ** (1.0 / p),
    )


def ospa(X: Any, Y: Any, params: OspaParams = OspaParams()) -> float:
    return ospa_components(X, Y, params).total


def track_points(tracks: Iterable[Any], with_velocity: bool = True) -> np.ndarray:
    """(range, velocity) or (range,) rows of track states."""
    dims = 2 if with_velocity else 1
    rows = [np.asarray(t.state, dtype=np.float64)[:dims] for t in tracks]
    return np.array(rows).reshape(len(rows), dims)


def target_points(targets: Iterable[Any], with_velocity: bool = True) -> np.ndarray:
    rows = [(t.range, t.velocity) if with_velocity else (t.range,) for t in targets]
    return np.array(rows, dtype=np.float64).reshape(len(rows), 2 if with_velocity else 1)


# ──────────────────────────────────────────────────────────────────────────────
# Pd / Pfa
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class DetectionScore:
    pd: float
    pfa: float
    matches: List[Tuple[int, int]] = field(default_factory=list)
    false_alarms: int = 0


def pd_pfa(
    dets: Sequence[Detection],
    truth: Any,
    grid_shape: Tuple[int, int],
    tol_bins: Tuple[float, float] = (1.0, 1.0),
) -> DetectionScore:
    """One-to-one truth/detection matching inside a +/- tolerance box.

    The match has maximum cardinality; among those, the smallest total
    distance wins. Widening the box therefore never lowers pd. ``matches``
    holds (truth index, detection index) pairs; pfa counts the unmatched
    detections over all grid cells.
    """
    tol_r, tol_d = tol_bins
    if tol_r < 0 or tol_d < 0:
        raise DomainError(f"tolerances must be >= 0, got {tol_bins}")
    entries = list(getattr(truth, "entries", truth))
    cells = int(grid_shape[0]) * int(grid_shape[1])
    if cells <= 0:
        raise DomainError(f"grid must have at least one cell, got {grid_shape}")

    matches: List[Tuple[int, int]] = []
    if entries and dets:
        T = np.asarray(entries, dtype=np.float64).reshape(-1, 2)
        D = np.array([det.position for det in dets], dtype=np.float64)
        dr = np.abs(T[:, None, 0] - D[None, :, 0])
        dd = np.abs(T[:, None, 1] - D[None, :, 1])
        in_box = (dr <= tol_r) & (dd <= tol_d)
        matches = assign(np.hypot(dr, dd), feasible=in_box).pairs

    false_alarms = len(dets) - len(matches)
    pd = len(matches) / len(entries) if entries else 1.0
    return DetectionScore(pd=pd, pfa=false_alarms / cells, matches=sorted(matches), false_alarms=false_alarms)


# ──────────────────────────────────────────────────────────────────────────────
# Сводка
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    minimum: float
    maximum: float
    count: int
    series: Tuple[float, ...]

    def as_row(self) -> dict:
        return {"mean": self.mean, "median": self.median, "min": self.minimum, "max": self.maximum,
                "count": self.count}


def summarize(values: Iterable[float]) -> Summary:
    """Mean (exactly rounded, so order does not matter), median, extremes and the series."""
    series = tuple(float(v) for v in values)
    if not series:
        raise DataError("cannot summarize an empty series")
    return Summary(
        mean=math.fsum(series) / len(series),
        median=float(np.median(series)),
        minimum=min(series),
        maximum=max(series),
        count=len(series),
        series=series,
    )
