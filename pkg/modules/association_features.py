# modules/association_features.py
"""RD patch embeddings on the unit sphere, cosine distance and EMA track features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

import numpy as np

from modules import nn_layers as nn
from modules.classic_detect import Detection
from modules.weight_store import read_weights, write_weights
from rdtrack.exceptions import DomainError, WeightFileError

FEATURE_DIM = 64
PATCH = 16
NORM_FLOOR = 1e-12


@dataclass
class EmbedWeights:
    """3x3 convolution from the three RD channels to ``FEATURE_DIM`` channels."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        if self.w.shape != (3, 3, 3, FEATURE_DIM) or self.b.shape != (FEATURE_DIM,):
            raise WeightFileError(
                f"embed weights must be (3, 3, 3, {FEATURE_DIM}) and ({FEATURE_DIM},), got {self.w.shape}, {self.b.shape}"
            )


def default_embed_weights(seed: int = 0) -> EmbedWeights:
    """Seeded random projection: uniform kernel with limit sqrt(6 / 27), zero bias."""
    rng = np.random.default_rng(seed)
    limit = math.sqrt(6.0 / 27.0)
    return EmbedWeights(rng.uniform(-limit, limit, size=(3, 3, 3, FEATURE_DIM)), np.zeros(FEATURE_DIM))


def load_embed_weights(path: Union[str, Path]) -> EmbedWeights:
    arrays = read_weights(path)
    try:
        return EmbedWeights(arrays["embed.w"], arrays["embed.b"])
    except KeyError as exc:
        raise WeightFileError(f"{path}: embed weights need arrays 'embed.w' and 'embed.b'") from exc


def save_embed_weights(weights: EmbedWeights, path: Union[str, Path]) -> Path:
    return write_weights({"embed.w": weights.w, "embed.b": weights.b}, path)


def _unit_basis() -> np.ndarray:
    e1 = np.zeros(FEATURE_DIM)
    e1[0] = 1.0
    return e1


def extract_patch(channels: np.ndarray, range_bin: float, doppler_bin: float) -> np.ndarray:
    """16 x 16 x 3 window with rows [r-8, r+8) around floor(bin), zero outside the grid."""
    rows, cols = channels.shape[:2]
    center_r = int(math.floor(range_bin))
    center_d = int(math.floor(doppler_bin))
    half = PATCH // 2
    patch = np.zeros((PATCH, PATCH, channels.shape[2]))
    r0, d0 = center_r - half, center_d - half
    src_r = slice(max(r0, 0), min(r0 + PATCH, rows))
    src_d = slice(max(d0, 0), min(d0 + PATCH, cols))
    patch[src_r.start - r0:src_r.stop - r0, src_d.start - d0:src_d.stop - d0] = channels[src_r, src_d]
    return patch


def embed_patch(tensor: Any, det: Detection, weights: EmbedWeights | None = None) -> np.ndarray:
    """Unit-norm feature of the RD patch around ``det``; a vanishing feature maps to e1."""
    weights = weights or default_embed_weights()
    channels = np.asarray(getattr(tensor, "channels", tensor), dtype=np.float64)
    patch = extract_patch(channels, det.range_bin, det.doppler_bin)
    response, _ = nn.conv2d_forward(patch[None], weights.w, weights.b, stride=1, pad=0)
    pooled = nn.silu(response).mean(axis=(0, 1, 2))
    norm = float(np.linalg.norm(pooled))
    if norm < NORM_FLOOR:
        return _unit_basis()
    return pooled / norm


def embed_detections(tensor: Any, dets: Iterable[Detection], weights: EmbedWeights | None = None) -> List[Detection]:
    weights = weights or default_embed_weights()
    return [d.with_feature(embed_patch(tensor, d, weights)) for d in dets]


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - a.b for unit vectors, clipped to [0, 2]."""
    return float(np.clip(1.0 - float(np.dot(a, b)), 0.0, 2.0))


def min_cosine_distance(feature: np.ndarray, gallery: Sequence[np.ndarray]) -> float:
    """Smallest cosine distance to a feature gallery (1.0 for an empty gallery)."""
    if len(gallery) == 0:
        return 1.0
    return min(cosine_distance(feature, g) for g in gallery)


def ema_update(track_f: np.ndarray, det_f: np.ndarray, alpha: float = 0.7) -> np.ndarray:
    """alpha * track_f + (1 - alpha) * det_f, re-normalized to unit length."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"EMA weight must lie in [0, 1], got {alpha}")
    raw = alpha * np.asarray(track_f, dtype=np.float64) + (1.0 - alpha) * np.asarray(det_f, dtype=np.float64)
    norm = float(np.linalg.norm(raw))
    if norm < NORM_FLOOR:
        return np.array(track_f, dtype=np.float64)
    return raw / norm
