# modules/signal_sim.py
"""LFMCW echo synthesis, target motion and measurement-level clutter frames.

All randomness flows through :func:`rng_stream`, one counter-based Philox
stream per ``(seed, frame, purpose)``, so any frame can be regenerated alone
and frames can be produced concurrently.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules.classic_detect import Detection
from rdtrack.exceptions import ConfigError, DomainError, OutOfRangeError, ShapeError
from utils.logger import log_debug, log_warn

SPEED_OF_LIGHT = 299_792_458.0

# Опорная мощность сигнала для кадров без целей: P_N считается от неё.
REFERENCE_SIGNAL_POWER = 1.0

Region = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class RadarParams:
    """Waveform and sampling parameters of one LFMCW frame.

    ``T`` defaults to ``M / fs`` (one pulse fills the fast-time window) and,
    when given explicitly, has to agree with it.
    """

    f0: float
    B: float
    L: int
    M: int
    fs: float
    delta_t: float = 0.2
    T: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("f0", "B", "fs", "delta_t"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"radar parameter '{name}' must be a positive finite number, got {value}",
                                  section="radar")
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError(f"radar parameter 'L' must be an integer >= 1, got {self.L}", section="radar")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"radar parameter 'M' must be an integer >= 1, got {self.M}", section="radar")
        if self.fs < self.B:
            raise ConfigError(f"sample rate fs={self.fs} is below the sweep bandwidth B={self.B}", section="radar")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "M", int(self.M))

        window = self.M / self.fs
        if self.T is None:
            object.__setattr__(self, "T", window)
        elif not math.isfinite(self.T) or self.T <= 0:
            raise ConfigError(f"radar parameter 'T' must be positive, got {self.T}", section="radar")
        elif abs(self.T - window) > 1e-9 * window:
            raise ConfigError(f"pulse width T={self.T} does not match M/fs={window}", section="radar")

    @classmethod
    def table1(cls) -> "RadarParams":
        """Published simulation parameters: 77 GHz, 561.96 MHz, 512 x 512."""
        return cls(f0=77e9, B=561.96e6, L=512, M=512, fs=561.96e6, delta_t=0.2)

    @classmethod
    def desk64(cls) -> "RadarParams":
        """Desk-scale 64 x 64 frame with the published carrier and bandwidth.

        The frame period is 0.1 ms: the desk window spans about 17 m and one
        Doppler bin is about 267 m/s, so targets must not leave the window
        between frames.
        """
        return cls(f0=77e9, B=561.96e6, L=64, M=64, fs=561.96e6, delta_t=1e-4)

    @property
    def k(self) -> float:
        """Chirp slope B / T."""
        return self.B / self.T

    @property
    def center_doppler_bin(self) -> int:
        return self.L // 2

    @property
    def max_range(self) -> float:
        return self.M * SPEED_OF_LIGHT / (2.0 * self.fs)

    @property
    def max_velocity(self) -> float:
        return SPEED_OF_LIGHT / (4.0 * self.f0 * self.T)

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.fs)

    @property
    def velocity_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.f0 * self.L * self.T)

    def doppler_frequency(self, velocity: float | np.ndarray) -> float | np.ndarray:
        return 2.0 * self.f0 * velocity / SPEED_OF_LIGHT


@dataclass(frozen=True)
class TargetState:
    """Point target: range (m), radial velocity (m/s), linear amplitude."""

    range: float
    velocity: float
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.range) and math.isfinite(self.velocity)):
            raise DomainError(f"target state must be finite, got ({self.range}, {self.velocity})")
        if self.range <= 0:
            raise DomainError(f"target range must be positive, got {self.range}")
        if not math.isfinite(self.amplitude) or self.amplitude <= 0:
            raise DomainError(f"target amplitude must be positive, got {self.amplitude}")


@dataclass(frozen=True)
class MeasurementModel:
    """Noise, confidence and feature settings of measurement-level frames."""

    sigma_r: float = 0.6
    sigma_v: float = 0.2
    target_confidence: Tuple[float, float] = (0.5, 1.0)
    clutter_confidence: Tuple[float, float] = (0.0, 0.3)
    feature_noise: float = 0.1
    feature_dim: int = 64

    def __post_init__(self) -> None:
        if self.sigma_r < 0 or self.sigma_v < 0:
            raise ConfigError("measurement noise deviations must be >= 0", section="clutter")
        for name in ("target_confidence", "clutter_confidence"):
            low, high = getattr(self, name)
            if not (0.0 <= low <= high <= 1.0):
                raise ConfigError(f"'{name}' must be a band inside [0, 1], got ({low}, {high})", section="clutter")
        if self.feature_noise < 0:
            raise ConfigError("'feature_noise' must be >= 0", section="clutter")


@dataclass(frozen=True)
class ScenarioConfig:
    radar: RadarParams
    targets: Tuple[TargetState, ...] = ()
    snr_db: Optional[float] = None
    frames: int = 1
    clutter_rate: float = 0.0
    clutter_region: Region = ((0.0, 0.0), (0.0, 0.0))
    seed: int = 0
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    random_targets: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(self.targets))
        if int(self.frames) != self.frames or self.frames < 1:
            raise ConfigError(f"'frames' must be an integer >= 1, got {self.frames}", section="run")
        if not math.isfinite(self.clutter_rate) or self.clutter_rate < 0:
            raise ConfigError(f"clutter rate must be >= 0, got {self.clutter_rate}", section="clutter")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"'seed' must be a non-negative integer, got {self.seed}", section="run")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ConfigError("'snr_db' must be finite (use 'none' for a noiseless run)", section="run")
        if self.random_targets is not None:
            low, high = self.random_targets
            if not (0 <= low <= high):
                raise ConfigError(f"random target band must satisfy 0 <= min <= max, got {self.random_targets}",
                                  section="targets")

    @property
    def region_is_empty(self) -> bool:
        (r_lo, r_hi), (v_lo, v_hi) = self.clutter_region
        return not (r_hi > r_lo and v_hi > v_lo)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def with_snr(self, snr_db: Optional[float]) -> "ScenarioConfig":
        return replace(self, snr_db=snr_db)


@dataclass
class RawEchoMatrix:
    """Complex fast-time x slow-time samples of one frame (M rows, L columns)."""

    samples: np.ndarray
    params: RadarParams

    def __post_init__(self) -> None:
        expected = (self.params.M, self.params.L)
        if self.samples.shape != expected:
            raise ShapeError(f"echo matrix shape {self.samples.shape} does not match (M, L) = {expected}")


# ──────────────────────────────────────────────────────────────────────────────
# Случайные потоки
# ──────────────────────────────────────────────────────────────────────────────
def rng_stream(seed: int, frame: int, purpose: str) -> np.random.Generator:
    """Independent Philox stream for one (seed, frame, purpose) triple."""
    key = zlib.crc32(purpose.encode("utf-8"))
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(frame), key))
    return np.random.Generator(np.random.Philox(sequence))


# ──────────────────────────────────────────────────────────────────────────────
# Эхо-сигнал
# ──────────────────────────────────────────────────────────────────────────────
def noise_power_for_snr(signal_power: float, snr_db: float) -> float:
    """Noise power P_N such that 10*log10(signal_power / P_N) == snr_db."""
    if not (math.isfinite(signal_power) and math.isfinite(snr_db)):
        raise DomainError(f"noise_power_for_snr needs finite inputs, got ({signal_power}, {snr_db})")
    if signal_power <= 0:
        raise DomainError(f"signal power must be positive, got {signal_power}")
    return signal_power / 10.0 ** (snr_db / 10.0)


def pre_snr_for_post(post_snr_db: float, params: RadarParams) -> float:
    """Pre-processing SNR giving ``post_snr_db`` after compression and integration."""
    return post_snr_db - 10.0 * math.log10(params.M * params.L)


def _chirp(params: RadarParams, t: np.ndarray) -> np.ndarray:
    # baseband sweep from -B/2 to +B/2 over one pulse
    return np.exp(1j * (math.pi * params.k * t * t - math.pi * params.B * t))


def reference_chirp(params: RadarParams) -> np.ndarray:
    """Transmitted chirp sampled at fs over one pulse (length M)."""
    t = np.arange(params.M) / params.fs
    return _chirp(params, t)


def target_echo(params: RadarParams, target: TargetState) -> np.ndarray:
    """Noise-free M x L echo of one target.

    Pulse n holds the chirp circularly delayed by tau_n = 2(R + v n T)/c and
    rotated by the slow-time Doppler phase 2 pi f_d n T.
    """
    if target.range <= 0:
        raise OutOfRangeError(f"target range must be positive, got {target.range}")
    if abs(target.velocity) >= params.max_velocity:
        raise OutOfRangeError(
            f"target velocity {target.velocity} m/s outside unambiguous +/-{params.max_velocity:.6g} m/s"
        )
    n = np.arange(params.L)
    tau = 2.0 * (target.range + target.velocity * n * params.T) / SPEED_OF_LIGHT
    delay_samples = tau * params.fs
    if np.any(delay_samples >= params.M) or np.any(delay_samples < 0):
        raise OutOfRangeError(
            f"target at {target.range} m delays the echo beyond the pulse window (max {params.max_range:.6g} m)"
        )
    t = np.arange(params.M) / params.fs
    shifted = np.mod(t[:, None] - tau[None, :], params.T)
    doppler = np.exp(2j * math.pi * params.doppler_frequency(target.velocity) * n * params.T)
    return target.amplitude * _chirp(params, shifted) * doppler[None, :]


def synth_echo(cfg: ScenarioConfig, frame: int, targets: Sequence[TargetState]) -> RawEchoMatrix:
    """Sum of target echoes plus complex white Gaussian noise at ``cfg.snr_db``.

    ``cfg.snr_db = None`` produces the noiseless echo.
    """
    params = cfg.radar
    signal = np.zeros((params.M, params.L), dtype=np.complex128)
    for target in targets:
        signal += target_echo(params, target)

    if cfg.snr_db is None:
        return RawEchoMatrix(signal, params)

    signal_power = float(np.mean(np.abs(signal) ** 2)) if targets else REFERENCE_SIGNAL_POWER
    noise_power = noise_power_for_snr(signal_power, cfg.snr_db)
    rng = rng_stream(cfg.seed, frame, "echo-noise")
    noise = rng.standard_normal((params.M, params.L)) + 1j * rng.standard_normal((params.M, params.L))
    log_debug(f"frame {frame}: P_S={signal_power:.6g}, P_N={noise_power:.6g}")
    return RawEchoMatrix(signal + noise * math.sqrt(noise_power / 2.0), params)


# ──────────────────────────────────────────────────────────────────────────────
# Движение целей
# ──────────────────────────────────────────────────────────────────────────────
def propagate_targets(targets: Iterable[TargetState], delta_t: float) -> List[TargetState]:
    """Constant-velocity step: range += velocity * delta_t."""
    return [replace(t, range=t.range + t.velocity * delta_t) for t in targets]


def trajectory(targets: Sequence[TargetState], frames: int, delta_t: float) -> List[List[TargetState]]:
    """Truth target lists for frames 0..frames-1."""
    current = list(targets)
    result = [current]
    for _ in range(frames - 1):
        current = propagate_targets(current, delta_t)
        result.append(current)
    return result


def random_targets(cfg: ScenarioConfig) -> List[TargetState]:
    """Seeded target list whose whole trajectory stays inside the clutter region."""
    if cfg.random_targets is None:
        return list(cfg.targets)
    if cfg.region_is_empty:
        raise ConfigError("random targets need a non-empty clutter region", section="clutter")
    rng = rng_stream(cfg.seed, 0, "random-targets")
    (r_lo, r_hi), (v_lo, v_hi) = cfg.clutter_region
    low, high = cfg.random_targets
    count = int(rng.integers(low, high + 1))
    span = (cfg.frames - 1) * cfg.radar.delta_t
    drawn: List[TargetState] = []
    for _ in range(count):
        velocity = float(rng.uniform(v_lo, v_hi))
        start_lo = r_lo + max(0.0, -velocity * span)
        start_hi = r_hi - max(0.0, velocity * span)
        if start_hi <= start_lo:
            velocity = 0.0
            start_lo, start_hi = r_lo, r_hi
        drawn.append(TargetState(range=float(rng.uniform(start_lo, start_hi)), velocity=velocity))
    return list(cfg.targets) + drawn


def initial_targets(cfg: ScenarioConfig) -> List[TargetState]:
    return random_targets(cfg) if cfg.random_targets is not None else list(cfg.targets)


# ──────────────────────────────────────────────────────────────────────────────
# Кадры измерений (для экспериментов только с трекером)
# ──────────────────────────────────────────────────────────────────────────────
def _unit_rows(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    return values / np.where(norms > 0, norms, 1.0)


def target_signatures(cfg: ScenarioConfig, count: int) -> np.ndarray:
    """Stable per-target unit feature signatures (count x feature_dim)."""
    rng = rng_stream(cfg.seed, 0, "target-signatures")
    return _unit_rows(rng.standard_normal((count, cfg.measurement.feature_dim)))


def gen_measurement_frame(cfg: ScenarioConfig, targets: Sequence[TargetState], frame: int) -> List[Detection]:
    """One noisy detection per target plus Poisson(clutter_rate) uniform clutter."""
    from modules.rd_pipeline import bin_of

    if cfg.clutter_rate > 0 and cfg.region_is_empty:
        raise ConfigError("clutter_rate > 0 requires a non-empty clutter region", section="clutter")

    model = cfg.measurement
    params = cfg.radar
    rng_targets = rng_stream(cfg.seed, frame, "measurement-targets")
    rng_clutter = rng_stream(cfg.seed, frame, "measurement-clutter")
    rng_features = rng_stream(cfg.seed, frame, "measurement-features")

    signatures = target_signatures(cfg, len(targets))
    detections: List[Detection] = []
    for index, target in enumerate(targets):
        measured_range = target.range + model.sigma_r * rng_targets.standard_normal()
        measured_velocity = target.velocity + model.sigma_v * rng_targets.standard_normal()
        confidence = float(rng_targets.uniform(*model.target_confidence))
        noisy = signatures[index] + model.feature_noise * rng_features.standard_normal(model.feature_dim)
        feature = _unit_rows(noisy)
        try:
            range_bin, doppler_bin = bin_of(float(measured_range), float(measured_velocity), params)
        except OutOfRangeError as exc:
            log_warn(f"frame {frame}: target {index} measurement dropped ({exc})")
            continue
        detections.append(Detection(range_bin, doppler_bin, confidence, target.amplitude ** 2, feature))

    count = int(rng_clutter.poisson(cfg.clutter_rate)) if cfg.clutter_rate > 0 else 0
    if count:
        (r_lo, r_hi), (v_lo, v_hi) = cfg.clutter_region
        ranges = rng_clutter.uniform(r_lo, r_hi, count)
        velocities = rng_clutter.uniform(v_lo, v_hi, count)
        confidences = rng_clutter.uniform(*model.clutter_confidence, count)
        energies = rng_clutter.exponential(1.0, count)
        features = _unit_rows(rng_features.standard_normal((count, model.feature_dim)))
        range_bins, doppler_bins = bin_of(ranges, velocities, params)
        for i in range(count):
            detections.append(
                Detection(float(range_bins[i]), float(doppler_bins[i]), float(confidences[i]),
                          float(energies[i]), features[i])
            )
    return detections
