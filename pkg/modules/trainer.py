# modules/trainer.py
"""Desk-scale dataset simulation and Adam training of the neural detector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.neural_detect import CELL, WeightSet, backward, batch_loss, forward
from modules.rd_pipeline import GroundTruthFrame, RDTensor, phys_of, range_doppler, three_channel, truth_frame
from modules.signal_sim import RadarParams, ScenarioConfig, TargetState, pre_snr_for_post, rng_stream, synth_echo
from rdtrack.exceptions import ConfigError, DataError, NonFiniteLossError
from utils.logger import log_debug
from utils.run_logger import RunLogger, null_run_logger

Sample = Tuple[RDTensor, GroundTruthFrame]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 16
    augment_noise_std: Tuple[float, float] = (0.0, 0.05)
    augment_off_epochs: int = 3
    lambda1: float = 0.7
    lambda2: float = 0.3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights lambda1 and lambda2 must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        low, high = self.augment_noise_std
        if not 0 <= low <= high:
            raise ConfigError(f"augment_noise_std must be a range 0 <= low <= high, got {self.augment_noise_std}")
        if self.augment_off_epochs < 0:
            raise ConfigError("augment_off_epochs must be >= 0")


@dataclass
class TrainResult:
    weights: WeightSet
    loss_trace: List[float] = field(default_factory=list)


class AdamOptimizer:
    """Adam over every array of a :class:`WeightSet`."""

    def __init__(self, weights: WeightSet, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.weights = weights
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(weights[name]) for name in weights}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(weights[name]) for name in weights}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        deltas = {}
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            deltas[name] = -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.weights.step(deltas)


def train(
    dataset: Sequence[Sample],
    cfg: TrainConfig,
    weights: Optional[WeightSet] = None,
    run_logger: Optional[RunLogger] = None,
) -> TrainResult:
    """Minimize the detector loss with Adam.

    Gaussian noise (std drawn per batch from ``augment_noise_std``) is added
    to the input tensors except during the last ``augment_off_epochs``.
    """
    if not dataset:
        raise DataError("training needs a non-empty dataset")
    events = run_logger or null_run_logger()
    w = weights.copy() if weights is not None else WeightSet.initialize(cfg.seed)
    optimizer = AdamOptimizer(w, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    inputs = np.stack([sample[0].channels for sample in dataset])
    truths = [sample[1] for sample in dataset]

    trace: List[float] = []
    for epoch in range(cfg.epochs):
        rng = rng_stream(cfg.seed, epoch, "train-epoch")
        augmented = epoch < cfg.epochs - cfg.augment_off_epochs
        order = rng.permutation(len(dataset))
        epoch_total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            batch = inputs[index]
            if augmented:
                std = rng.uniform(*cfg.augment_noise_std)
                batch = batch + rng.normal(0.0, std, size=batch.shape)
            det_maps, cache = forward(batch, w)
            result = batch_loss(det_maps, [truths[i] for i in index], cfg.lambda1, cfg.lambda2)
            total = float(result.total)
            if not math.isfinite(total):
                raise NonFiniteLossError(
                    f"non-finite loss {total} at epoch {epoch + 1}, batch starting at sample {start} "
                    f"(position={float(result.position)}, confidence={float(result.confidence)})"
                )
            optimizer.step(backward(cache, result.grad / len(index)))
            epoch_total += total
        mean_loss = epoch_total / len(dataset)
        trace.append(mean_loss)
        events.log_epoch(epoch + 1, mean_loss, augmented)
        log_debug(f"epoch {epoch + 1}/{cfg.epochs}: loss={mean_loss:.6f} augmented={augmented}")
    return TrainResult(w, trace)


# ──────────────────────────────────────────────────────────────────────────────
# Набор данных
# ──────────────────────────────────────────────────────────────────────────────
def _draw_cells(rng: np.random.Generator, radar: RadarParams, count: int) -> List[Tuple[float, float]]:
    """Continuous target bins in distinct detector cells, one bin away from the edges."""
    chosen: List[Tuple[float, float]] = []
    used = set()
    for _ in range(50 * max(count, 1)):
        if len(chosen) == count:
            break
        range_bin = float(rng.uniform(1.0, radar.M - 1.0))
        doppler_bin = float(rng.uniform(1.0, radar.L - 1.0))
        cell = (int(range_bin // CELL), int(doppler_bin // CELL))
        if cell in used:
            continue
        used.add(cell)
        chosen.append((range_bin, doppler_bin))
    return chosen


def build_dataset(
    radar: RadarParams,
    count: int,
    snr_db_range: Tuple[float, float] = (10.0, 15.0),
    targets_per_frame: Tuple[int, int] = (1, 3),
    seed: int = 0,
) -> List[Sample]:
    """Simulated (RDTensor, GroundTruthFrame) pairs at post-integration SNRs in ``snr_db_range``."""
    samples: List[Sample] = []
    for frame in range(count):
        rng = rng_stream(seed, frame, "dataset-frame")
        bins = _draw_cells(rng, radar, int(rng.integers(targets_per_frame[0], targets_per_frame[1] + 1)))
        targets = [TargetState(*phys_of(rb, db, radar)) for rb, db in bins]
        post_snr = float(rng.uniform(*snr_db_range))
        scenario = ScenarioConfig(radar=radar, targets=tuple(targets), snr_db=pre_snr_for_post(post_snr, radar),
                                  seed=seed)
        rd = range_doppler(synth_echo(scenario, frame, targets))
        samples.append((three_channel(rd), truth_frame(targets, radar, frame)))
    return samples


def split_dataset(dataset: Sequence[Sample], train_fraction: float = 0.7,
                  seed: int = 0) -> Tuple[List[Sample], List[Sample]]:
    """Seeded shuffle followed by a train/test split (7:3 by default)."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    order = rng_stream(seed, 0, "dataset-split").permutation(len(dataset))
    cut = int(round(train_fraction * len(dataset)))
    return [dataset[i] for i in order[:cut]], [dataset[i] for i in order[cut:]]
