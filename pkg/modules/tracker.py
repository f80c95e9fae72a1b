# modules/tracker.py
"""Confidence-adaptive Kalman tracking with gated, feature-augmented
Hungarian association and a tentative/confirmed/deleted track lifecycle.

State and measurement are both (range m, radial velocity m/s).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from modules.association_features import ema_update
from modules.classic_detect import Detection, sort_key
from modules.rd_pipeline import phys_of
from modules.signal_sim import RadarParams
from rdtrack.exceptions import ConfigError, DomainError, SingularMatrixError

CHI2_99_2DOF = 9.2103
CONDITION_LIMIT = 1e14

ConfidenceMapping = Callable[[Sequence[float], float], float]


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    delta_t: float
    q_s: float
    sigma_r: float
    sigma_v: float

    @classmethod
    def constant_velocity(cls, delta_t: float = 0.2, q_s: float = 0.2, sigma_r: float = 0.6,
                          sigma_v: float = 0.2) -> "MotionModel":
        """Constant-velocity model with white-acceleration process noise of intensity ``q_s``."""
        if delta_t <= 0 or q_s < 0 or sigma_r <= 0 or sigma_v <= 0:
            raise ConfigError("motion model needs delta_t > 0, q_s >= 0 and positive measurement deviations")
        dt = delta_t
        F = np.array([[1.0, dt], [0.0, 1.0]])
        Q = q_s * np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt]])
        R = np.diag([sigma_r ** 2, sigma_v ** 2])
        return cls(F, np.eye(2), Q, R, delta_t, q_s, sigma_r, sigma_v)

    @property
    def initial_covariance(self) -> np.ndarray:
        return np.diag([self.sigma_r ** 2, self.sigma_v ** 2])


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


class EventKind(str, Enum):
    BORN = "born"
    UPDATED = "updated"
    MISSED = "missed"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class TrackEvent:
    frame: int
    track_id: int
    kind: EventKind


@dataclass(frozen=True)
class Track:
    id: int
    state: np.ndarray
    covariance: np.ndarray
    feature: Optional[np.ndarray] = None
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    misses: int = 0
    age: int = 1
    recent: Tuple[bool, ...] = (True,)

    @property
    def range(self) -> float:
        return float(self.state[0])

    @property
    def velocity(self) -> float:
        return float(self.state[1])

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DELETED


@dataclass
class TrackerConfig:
    mu: float = 0.3
    alpha: float = 0.7
    gate: float = CHI2_99_2DOF
    confirm_hits: int = 2
    confirm_window: int = 3
    max_misses: int = 3
    init_confidence_min: float = 0.3
    cakf_factor_cap: float = 10.0
    fixed_r: bool = False
    position_only: bool = False
    confidence_mapping: Optional[ConfidenceMapping] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0 or not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"mu and alpha must lie in [0, 1], got mu={self.mu}, alpha={self.alpha}")
        if self.gate <= 0:
            raise ConfigError(f"gate must be positive, got {self.gate}")
        if not 1 <= self.confirm_hits <= self.confirm_window:
            raise ConfigError("confirmation needs 1 <= confirm_hits <= confirm_window")
        if self.max_misses < 1:
            raise ConfigError("max_misses must be >= 1")
        if self.cakf_factor_cap < 1:
            raise ConfigError("cakf_factor_cap must be >= 1")

    @property
    def tentative_miss_limit(self) -> int:
        """Consecutive misses after which a tentative track can no longer confirm."""
        return self.confirm_window - self.confirm_hits + 1


# ──────────────────────────────────────────────────────────────────────────────
# C-AKF
# ──────────────────────────────────────────────────────────────────────────────
def cakf_factor(confidences: Sequence[float], cap: float = 10.0) -> float:
    """n / (2 * sum(c)), clamped to [1/cap, cap]; 1.0 for no detections."""
    n = len(confidences)
    if n == 0:
        return 1.0
    total = float(np.sum(confidences))
    if total <= 0:
        return cap
    return min(max(n / (2.0 * total), 1.0 / cap), cap)


def cakf_scale(R: np.ndarray, confidences: Sequence[float], cap: float = 10.0,
               mapping: Optional[ConfidenceMapping] = None) -> np.ndarray:
    """Measurement covariance rescaled by the frame's detection confidences."""
    if len(confidences) == 0:
        return np.array(R, dtype=np.float64)
    factor = (mapping or cakf_factor)(confidences, cap)
    return factor * np.asarray(R, dtype=np.float64)


# ──────────────────────────────────────────────────────────────────────────────
# Фильтр Калмана
# ──────────────────────────────────────────────────────────────────────────────
def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _check_invertible(S: np.ndarray) -> None:
    if not np.all(np.isfinite(S)):
        raise SingularMatrixError(f"innovation covariance has non-finite entries: {S.tolist()}")
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = np.linalg.cond(S)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularMatrixError(f"innovation covariance is singular or ill-conditioned: {S.tolist()}")


def kf_predict(track: Track, m: MotionModel) -> Track:
    state = m.F @ track.state
    covariance = _symmetrize(m.F @ track.covariance @ m.F.T + m.Q)
    return replace(track, state=state, covariance=covariance)


def innovation_covariance(track: Track, m: MotionModel, R_hat: np.ndarray) -> np.ndarray:
    return _symmetrize(m.H @ track.covariance @ m.H.T + R_hat)


def kf_update(track: Track, z: Sequence[float], m: MotionModel, R_hat: np.ndarray) -> Track:
    """Kalman update with the Joseph-form covariance."""
    S = innovation_covariance(track, m, R_hat)
    _check_invertible(S)
    P = track.covariance
    K = np.linalg.solve(S, m.H @ P).T
    innovation = np.asarray(z, dtype=np.float64) - m.H @ track.state
    state = track.state + K @ innovation
    I_KH = np.eye(P.shape[0]) - K @ m.H
    covariance = _symmetrize(I_KH @ P @ I_KH.T + K @ R_hat @ K.T)
    return replace(track, state=state, covariance=covariance)


def mahalanobis2(z: np.ndarray, track: Track | np.ndarray, S: np.ndarray) -> float | np.ndarray:
    """(z - x)^T S^-1 (z - x) for one measurement (2,) or a stack (n, 2)."""
    S = np.asarray(S, dtype=np.float64)
    _check_invertible(S)
    x = track.state if isinstance(track, Track) else np.asarray(track, dtype=np.float64)
    diff = np.atleast_2d(np.asarray(z, dtype=np.float64)) - x
    solved = np.linalg.solve(S, diff.T)
    d1 = np.sum(diff.T * solved, axis=0)
    return float(d1[0]) if np.ndim(z) == 1 else d1


def combined_cost(d1, d2, mu: float = 0.3):
    if not 0.0 <= mu <= 1.0:
        raise DomainError(f"mu must lie in [0, 1], got {mu}")
    return mu * d1 + (1.0 - mu) * d2


# ──────────────────────────────────────────────────────────────────────────────
# Назначение
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class Assignment:
    pairs: List[Tuple[int, int]]
    unmatched_rows: List[int]
    unmatched_cols: List[int]
    total: float


def assign(cost: np.ndarray, feasible: Optional[np.ndarray] = None) -> Assignment:
    """Minimum-cost assignment over feasible pairs.

    Infeasible pairs are priced with a sentinel above any feasible total and
    removed from the result, so the solution first maximizes the number of
    feasible pairs and then minimizes their cost.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DomainError(f"cost matrix must be 2-D, got shape {cost.shape}")
    rows, cols = cost.shape
    if feasible is None:
        feasible = np.isfinite(cost)
    if rows == 0 or cols == 0 or not feasible.any():
        return Assignment([], list(range(rows)), list(range(cols)), 0.0)

    sentinel = 2.0 * (np.abs(cost[feasible]).sum() + 1.0)
    padded = np.where(feasible, cost, sentinel)
    row_ind, col_ind = linear_sum_assignment(padded)
    pairs = [(int(r), int(c)) for r, c in zip(row_ind, col_ind) if feasible[r, c]]
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    return Assignment(
        pairs=sorted(pairs),
        unmatched_rows=[r for r in range(rows) if r not in matched_rows],
        unmatched_cols=[c for c in range(cols) if c not in matched_cols],
        total=float(sum(cost[r, c] for r, c in pairs)),
    )


# ──────────────────────────────────────────────────────────────────────────────
# Шаг трекера
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class TrackerState:
    tracks: List[Track] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0


@dataclass
class StepResult:
    frame: int
    tracks: List[Track]
    events: List[TrackEvent]
    R_hat: np.ndarray


def _measurements(dets: Sequence[Detection], params: Optional[RadarParams]) -> np.ndarray:
    if not dets:
        return np.zeros((0, 2))
    bins = np.array([d.position for d in dets], dtype=np.float64)
    if params is None:
        return bins
    ranges, velocities = phys_of(bins[:, 0], bins[:, 1], params)
    return np.column_stack([ranges, velocities])


def _cost_matrix(predicted: Sequence[Track], dets: Sequence[Detection], Z: np.ndarray, m: MotionModel,
                 R_hat: np.ndarray, cfg: TrackerConfig) -> Tuple[np.ndarray, np.ndarray]:
    n_tracks, n_dets = len(predicted), len(dets)
    cost = np.zeros((n_tracks, n_dets))
    feasible = np.zeros((n_tracks, n_dets), dtype=bool)
    if n_tracks == 0 or n_dets == 0:
        return cost, feasible

    has_feature = np.array([d.feature is not None for d in dets])
    features = None
    if has_feature.any():
        dim = next(d.feature for d in dets if d.feature is not None).shape[0]
        features = np.zeros((n_dets, dim))
        for j, det in enumerate(dets):
            if det.feature is not None:
                features[j] = det.feature

    for i, track in enumerate(predicted):
        d1 = mahalanobis2(Z, track.state, innovation_covariance(track, m, R_hat))
        feasible[i] = d1 <= cfg.gate
        if cfg.position_only:
            cost[i] = d1
            continue
        d2 = np.ones(n_dets)
        if features is not None and track.feature is not None:
            d2 = np.where(has_feature, np.clip(1.0 - features @ track.feature, 0.0, 2.0), 1.0)
        cost[i] = combined_cost(d1, d2, cfg.mu)
    return cost, feasible


def step(state: TrackerState, dets: Iterable[Detection], m: MotionModel, cfg: TrackerConfig,
         params: Optional[RadarParams] = None) -> StepResult:
    """Advance the tracker by one frame of detections (the state is updated in place)."""
    frame = state.frame
    ordered = sorted(dets, key=sort_key)
    Z = _measurements(ordered, params)
    confidences = [d.confidence for d in ordered]
    if cfg.fixed_r:
        R_hat = np.array(m.R, dtype=np.float64)
    else:
        R_hat = cakf_scale(m.R, confidences, cfg.cakf_factor_cap, cfg.confidence_mapping)

    predicted = [kf_predict(t, m) for t in state.tracks if t.alive]
    cost, feasible = _cost_matrix(predicted, ordered, Z, m, R_hat, cfg)
    result = assign(cost, feasible)

    events: List[TrackEvent] = []
    survivors: List[Track] = []
    for i, j in result.pairs:
        track = kf_update(predicted[i], Z[j], m, R_hat)
        det = ordered[j]
        feature = track.feature
        if det.feature is not None:
            feature = det.feature.copy() if feature is None else ema_update(feature, det.feature, cfg.alpha)
        recent = (track.recent + (True,))[-cfg.confirm_window:]
        status = track.status
        events.append(TrackEvent(frame, track.id, EventKind.UPDATED))
        if status is TrackStatus.TENTATIVE and sum(recent) >= cfg.confirm_hits:
            status = TrackStatus.CONFIRMED
            events.append(TrackEvent(frame, track.id, EventKind.CONFIRMED))
        survivors.append(replace(track, feature=feature, status=status, hits=track.hits + 1, misses=0,
                                 age=track.age + 1, recent=recent))

    for i in result.unmatched_rows:
        track = predicted[i]
        misses = track.misses + 1
        recent = (track.recent + (False,))[-cfg.confirm_window:]
        missed = replace(track, misses=misses, age=track.age + 1, recent=recent)
        events.append(TrackEvent(frame, track.id, EventKind.MISSED))
        limit = cfg.max_misses if track.status is TrackStatus.CONFIRMED else cfg.tentative_miss_limit
        if misses >= limit:
            events.append(TrackEvent(frame, track.id, EventKind.DELETED))
            continue
        survivors.append(missed)

    for j in result.unmatched_cols:
        det = ordered[j]
        if det.confidence < cfg.init_confidence_min:
            continue
        status = TrackStatus.CONFIRMED if cfg.confirm_hits <= 1 else TrackStatus.TENTATIVE
        born = Track(
            id=state.next_id,
            state=np.array(Z[j], dtype=np.float64),
            covariance=m.initial_covariance,
            feature=None if det.feature is None else det.feature.copy(),
            status=status,
        )
        state.next_id += 1
        events.append(TrackEvent(frame, born.id, EventKind.BORN))
        if status is TrackStatus.CONFIRMED:
            events.append(TrackEvent(frame, born.id, EventKind.CONFIRMED))
        survivors.append(born)

    survivors.sort(key=lambda t: t.id)
    state.tracks = survivors
    state.frame += 1
    return StepResult(frame, list(survivors), events, R_hat)


class Tracker:
    """Owns a :class:`TrackerState` and keeps every frame's :class:`StepResult`."""

    def __init__(self, motion: Optional[MotionModel] = None, config: Optional[TrackerConfig] = None,
                 params: Optional[RadarParams] = None):
        self.motion = motion or MotionModel.constant_velocity()
        self.config = config or TrackerConfig()
        self.params = params
        self.state = TrackerState()
        self.history: List[StepResult] = []

    def step(self, dets: Iterable[Detection]) -> StepResult:
        result = step(self.state, dets, self.motion, self.config, self.params)
        self.history.append(result)
        return result

    def run(self, frames: Iterable[Sequence[Detection]]) -> List[StepResult]:
        for dets in frames:
            self.step(dets)
        return self.history

    def confirmed(self, frame: int) -> List[Track]:
        return [t for t in self.history[frame].tracks if t.status is TrackStatus.CONFIRMED]
