# modules/neural_detect.py
"""Desk-scale neural detector: architecture, weights, forward/backward,
training loss, head decoding and finite-difference verification.

Pipeline (channel-last)::

    3 x (conv s2 -> IN -> SiLU) -> residual block -> + positional encoding
    -> windowed attention block -> shifted windowed attention block
    -> SPPF -> 1x1 head (confidence, range offset, Doppler offset)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from modules import nn_layers as nn
from modules.classic_detect import Detection
from rdtrack.exceptions import DomainError, OutOfRangeError, ShapeError, StaleCacheError
from utils.logger import log_warn

CELL = 8
CHANNELS = 64
HEADS = 4
WINDOW = 4
MLP_HIDDEN = 128
POOL_SIZE = 5

DetectionMap = np.ndarray

# name -> (shape, kind); "kernel" entries are initialized from fan-in, the rest are constants.
ARCHITECTURE: Dict[str, Tuple[Tuple[int, ...], str]] = {}


def _register(name: str, shape: Tuple[int, ...], kind: str) -> None:
    ARCHITECTURE[name] = (shape, kind)


for _idx, (_cin, _cout) in enumerate(((3, 16), (16, 32), (32, CHANNELS)), start=1):
    _register(f"enc{_idx}.w", (3, 3, _cin, _cout), "kernel")
    _register(f"enc{_idx}.in.g", (_cout,), "scale")
    _register(f"enc{_idx}.in.b", (_cout,), "shift")
for _conv in ("conv1", "conv2"):
    _register(f"res.{_conv}.w", (3, 3, CHANNELS, CHANNELS), "kernel")
    _register(f"res.{_conv}.b", (CHANNELS,), "shift")
for _block in ("block1", "block2"):
    _register(f"{_block}.ln1.g", (CHANNELS,), "scale")
    _register(f"{_block}.ln1.b", (CHANNELS,), "shift")
    for _proj in ("wq", "wk", "wv", "wo"):
        _register(f"{_block}.attn.{_proj}", (CHANNELS, CHANNELS), "kernel")
    for _bias in ("bq", "bv", "bo"):
        _register(f"{_block}.attn.{_bias}", (CHANNELS,), "shift")
    _register(f"{_block}.ln2.g", (CHANNELS,), "scale")
    _register(f"{_block}.ln2.b", (CHANNELS,), "shift")
    _register(f"{_block}.mlp.w1", (CHANNELS, MLP_HIDDEN), "kernel")
    _register(f"{_block}.mlp.b1", (MLP_HIDDEN,), "shift")
    _register(f"{_block}.mlp.w2", (MLP_HIDDEN, CHANNELS), "kernel")
    _register(f"{_block}.mlp.b2", (CHANNELS,), "shift")
_register("sppf.w", (4 * CHANNELS, CHANNELS), "kernel")
_register("sppf.b", (CHANNELS,), "shift")
_register("head.w", (CHANNELS, 3), "kernel")
_register("head.b", (3,), "shift")


class WeightSet:
    """Named parameter arrays with a mutation counter.

    Every write through :meth:`__setitem__` or :meth:`step` bumps
    ``version``; forward caches remember the version they were built with.
    """

    def __init__(self, params: Mapping[str, np.ndarray], version: int = 0):
        self.params: Dict[str, np.ndarray] = dict(params)
        self.version = version

    @classmethod
    def initialize(cls, seed: int = 0) -> "WeightSet":
        """He-style uniform kernels (limit sqrt(6 / fan_in)), zero shifts, unit scales."""
        rng = np.random.default_rng(seed)
        params: Dict[str, np.ndarray] = {}
        for name, (shape, kind) in ARCHITECTURE.items():
            if kind == "kernel":
                fan_in = int(np.prod(shape[:-1]))
                limit = math.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-limit, limit, size=shape)
            elif kind == "scale":
                params[name] = np.ones(shape)
            else:
                params[name] = np.zeros(shape)
        return cls(params)

    @classmethod
    def zeros(cls) -> "WeightSet":
        return cls({name: np.zeros(shape) for name, (shape, _) in ARCHITECTURE.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value)
        self.version += 1

    def __contains__(self, name: object) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def names(self) -> List[str]:
        return list(self.params)

    def copy(self) -> "WeightSet":
        return WeightSet({k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype: Any) -> "WeightSet":
        return WeightSet({k: v.astype(dtype) for k, v in self.params.items()})

    def step(self, deltas: Mapping[str, np.ndarray]) -> None:
        """Add ``deltas`` in place (one optimizer step)."""
        for name, delta in deltas.items():
            self.params[name] += delta
        self.version += 1

    def missing(self) -> List[str]:
        return [name for name in ARCHITECTURE if name not in self.params]

    def mismatched(self) -> List[str]:
        return [name for name, (shape, _) in ARCHITECTURE.items()
                if name in self.params and self.params[name].shape != shape]


@dataclass
class ForwardCache:
    weights: WeightSet
    version: int
    batched: bool
    stages: Dict[str, Any]


# ──────────────────────────────────────────────────────────────────────────────
# Прямой проход
# ──────────────────────────────────────────────────────────────────────────────
def _attn_params(w: WeightSet, prefix: str) -> Dict[str, np.ndarray]:
    return {key: w[f"{prefix}.attn.{key}"] for key in ("wq", "bq", "wk", "wv", "bv", "wo", "bo")}


def _block_forward(x: np.ndarray, w: WeightSet, prefix: str, shift: int):
    h, c_ln1 = nn.layer_norm_forward(x, w[f"{prefix}.ln1.g"], w[f"{prefix}.ln1.b"])
    windows = nn.window_partition(nn.cyclic_shift(h, shift), WINDOW)
    attended, c_attn = nn.mhsa_forward(windows, _attn_params(w, prefix), HEADS)
    x1 = x + nn.cyclic_shift(nn.window_reverse(attended, WINDOW, x.shape), -shift)

    h2, c_ln2 = nn.layer_norm_forward(x1, w[f"{prefix}.ln2.g"], w[f"{prefix}.ln2.b"])
    m1, c_fc1 = nn.linear_forward(h2, w[f"{prefix}.mlp.w1"], w[f"{prefix}.mlp.b1"])
    m2, c_act = nn.silu_forward(m1)
    m3, c_fc2 = nn.linear_forward(m2, w[f"{prefix}.mlp.w2"], w[f"{prefix}.mlp.b2"])
    cache = {"shape": x.shape, "shift": shift, "ln1": c_ln1, "attn": c_attn, "ln2": c_ln2,
             "fc1": c_fc1, "act": c_act, "fc2": c_fc2}
    return x1 + m3, cache


def _sppf_forward(x: np.ndarray, w: WeightSet):
    y1, c1 = nn.maxpool_forward(x, POOL_SIZE)
    y2, c2 = nn.maxpool_forward(y1, POOL_SIZE)
    y3, c3 = nn.maxpool_forward(y2, POOL_SIZE)
    fused, c_fuse = nn.linear_forward(np.concatenate([x, y1, y2, y3], axis=-1), w["sppf.w"], w["sppf.b"])
    return fused, {"pools": (c1, c2, c3), "fuse": c_fuse}


def _as_input(x: Any) -> np.ndarray:
    return np.asarray(getattr(x, "channels", x))


def forward(x: Any, w: WeightSet) -> Tuple[DetectionMap, ForwardCache]:
    """Run the detector on one ``(H, W, 3)`` tensor or a batch ``(N, H, W, 3)``.

    Returns the detection map ``(H/8, W/8, 3)`` (batched accordingly) and the
    activation cache consumed by :func:`backward`.
    """
    arr = _as_input(x)
    batched = arr.ndim == 4
    if not batched:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"detector input must be (H, W, 3) or (N, H, W, 3), got {arr.shape}")
    granule = CELL * WINDOW
    if arr.shape[1] % granule or arr.shape[2] % granule:
        raise ShapeError(f"input grid {arr.shape[1]}x{arr.shape[2]} must be divisible by {granule}")

    stages: Dict[str, Any] = {}
    h = arr
    for idx in (1, 2, 3):
        h, c_conv = nn.conv2d_forward(h, w[f"enc{idx}.w"], None, stride=2, pad=1)
        h, c_norm = nn.instance_norm_forward(h, w[f"enc{idx}.in.g"], w[f"enc{idx}.in.b"])
        h, c_act = nn.silu_forward(h)
        stages[f"enc{idx}"] = (c_conv, c_norm, c_act)

    r1, c_r1 = nn.conv2d_forward(h, w["res.conv1.w"], w["res.conv1.b"], stride=1, pad=1)
    r2, c_r2 = nn.silu_forward(r1)
    r3, c_r3 = nn.conv2d_forward(r2, w["res.conv2.w"], w["res.conv2.b"], stride=1, pad=1)
    stages["res"] = (c_r1, c_r2, c_r3)
    h = h + r3

    h = h + nn.positional_encoding(h.shape[1], h.shape[2], h.shape[3]).astype(h.dtype)
    h, stages["block1"] = _block_forward(h, w, "block1", 0)
    h, stages["block2"] = _block_forward(h, w, "block2", WINDOW // 2)
    h, stages["sppf"] = _sppf_forward(h, w)
    out, stages["head"] = nn.linear_forward(h, w["head.w"], w["head.b"])

    cache = ForwardCache(weights=w, version=w.version, batched=batched, stages=stages)
    return (out if batched else out[0]), cache


# ──────────────────────────────────────────────────────────────────────────────
# Обратный проход
# ──────────────────────────────────────────────────────────────────────────────
def _block_backward(dout: np.ndarray, cache: Dict[str, Any], prefix: str, grads: Dict[str, np.ndarray]):
    shift = cache["shift"]
    dm2, grads[f"{prefix}.mlp.w2"], grads[f"{prefix}.mlp.b2"] = nn.linear_backward(dout, cache["fc2"])
    dm1 = nn.silu_backward(dm2, cache["act"])
    dh2, grads[f"{prefix}.mlp.w1"], grads[f"{prefix}.mlp.b1"] = nn.linear_backward(dm1, cache["fc1"])
    dx1_norm, grads[f"{prefix}.ln2.g"], grads[f"{prefix}.ln2.b"] = nn.layer_norm_backward(dh2, cache["ln2"])
    dx1 = dout + dx1_norm

    dwin = nn.window_partition(nn.cyclic_shift(dx1, shift), WINDOW)
    dwin_in, attn_grads = nn.mhsa_backward(dwin, cache["attn"])
    for key, value in attn_grads.items():
        grads[f"{prefix}.attn.{key}"] = value
    dh = nn.cyclic_shift(nn.window_reverse(dwin_in, WINDOW, cache["shape"]), -shift)
    dx_norm, grads[f"{prefix}.ln1.g"], grads[f"{prefix}.ln1.b"] = nn.layer_norm_backward(dh, cache["ln1"])
    return dx1 + dx_norm


def backward(cache: ForwardCache, grad_map: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of every WeightSet entry given d(loss)/d(detection map)."""
    if cache.weights.version != cache.version:
        raise StaleCacheError(
            f"forward cache was built with weight version {cache.version}, weights are now at {cache.weights.version}"
        )
    dout = np.asarray(grad_map)
    if not cache.batched:
        dout = dout[None]
    stages = cache.stages
    grads: Dict[str, np.ndarray] = {}

    dh, grads["head.w"], grads["head.b"] = nn.linear_backward(dout, stages["head"])

    dcat, grads["sppf.w"], grads["sppf.b"] = nn.linear_backward(dh, stages["sppf"]["fuse"])
    dx, dy1, dy2, dy3 = np.split(dcat, 4, axis=-1)
    c1, c2, c3 = stages["sppf"]["pools"]
    dy2 = dy2 + nn.maxpool_backward(dy3, c3)
    dy1 = dy1 + nn.maxpool_backward(dy2, c2)
    dh = dx + nn.maxpool_backward(dy1, c1)

    dh = _block_backward(dh, stages["block2"], "block2", grads)
    dh = _block_backward(dh, stages["block1"], "block1", grads)

    c_r1, c_r2, c_r3 = stages["res"]
    dr2, grads["res.conv2.w"], grads["res.conv2.b"] = nn.conv2d_backward(dh, c_r3)
    dr1 = nn.silu_backward(dr2, c_r2)
    dres, grads["res.conv1.w"], grads["res.conv1.b"] = nn.conv2d_backward(dr1, c_r1)
    dh = dh + dres

    for idx in (3, 2, 1):
        c_conv, c_norm, c_act = stages[f"enc{idx}"]
        dh = nn.silu_backward(dh, c_act)
        dh, grads[f"enc{idx}.in.g"], grads[f"enc{idx}.in.b"] = nn.instance_norm_backward(dh, c_norm)
        dh, grads[f"enc{idx}.w"], _ = nn.conv2d_backward(dh, c_conv)
    return grads


# ──────────────────────────────────────────────────────────────────────────────
# Функция потерь
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class LossResult:
    total: Any
    position: Any
    confidence: Any
    grad: np.ndarray
    duplicates: int = 0


def _truth_entries(truth: Any) -> Sequence[Tuple[float, float]]:
    return getattr(truth, "entries", truth)


def loss(det_map: DetectionMap, truth: Any, lambda1: float = 0.7, lambda2: float = 0.3) -> LossResult:
    """Weighted position + confidence loss of one ``(h, w, 3)`` map.

    Positive cells hold a truth point; the offset target is the fractional
    position inside the 8 x 8 cell. The confidence term is the binary
    cross-entropy with logits over every cell. Scalars keep the map dtype.
    """
    if det_map.ndim != 3 or det_map.shape[-1] != 3:
        raise ShapeError(f"detection map must be (h, w, 3), got {det_map.shape}")
    rows, cols = det_map.shape[:2]
    occupancy = np.zeros((rows, cols), dtype=det_map.dtype)
    targets = np.zeros((rows, cols, 2), dtype=det_map.dtype)
    duplicates = 0
    for range_bin, doppler_bin in _truth_entries(truth):
        scaled = (range_bin / CELL, doppler_bin / CELL)
        i, j = int(math.floor(scaled[0])), int(math.floor(scaled[1]))
        if not (0 <= i < rows and 0 <= j < cols):
            raise OutOfRangeError(f"truth ({range_bin}, {doppler_bin}) outside the {rows * CELL}x{cols * CELL} grid")
        if occupancy[i, j]:
            duplicates += 1
            log_warn(f"two truths share detector cell ({i}, {j}); keeping the first")
            continue
        occupancy[i, j] = 1.0
        targets[i, j] = (scaled[0] - i, scaled[1] - j)

    conf_logit = det_map[..., 0]
    offsets = nn.sigmoid(det_map[..., 1:])
    positive = occupancy[..., None]

    residual = (offsets - targets) * positive
    position = np.sum(residual * residual)
    confidence = np.sum(np.logaddexp(0.0, conf_logit) - occupancy * conf_logit)

    grad = np.zeros_like(det_map)
    grad[..., 0] = lambda2 * (nn.sigmoid(conf_logit) - occupancy)
    grad[..., 1:] = lambda1 * 2.0 * residual * offsets * (1.0 - offsets)
    total = lambda1 * position + lambda2 * confidence
    return LossResult(total, position, confidence, grad, duplicates)


def batch_loss(maps: np.ndarray, truths: Sequence[Any], lambda1: float = 0.7, lambda2: float = 0.3) -> LossResult:
    """Summed loss and stacked gradient of a batch of maps."""
    if len(maps) != len(truths):
        raise ShapeError(f"{len(maps)} maps but {len(truths)} truth frames")
    results = [loss(m, t, lambda1, lambda2) for m, t in zip(maps, truths)]
    return LossResult(
        total=sum(r.total for r in results),
        position=sum(r.position for r in results),
        confidence=sum(r.confidence for r in results),
        grad=np.stack([r.grad for r in results]),
        duplicates=sum(r.duplicates for r in results),
    )


# ──────────────────────────────────────────────────────────────────────────────
# Декодирование
# ──────────────────────────────────────────────────────────────────────────────
def decode_detections(
    det_map: DetectionMap, conf_threshold: float = 0.5, energy_map: Optional[np.ndarray] = None
) -> List[Detection]:
    """Cells above ``conf_threshold`` that are local maxima among their 8 neighbours."""
    if not 0.0 < conf_threshold < 1.0:
        raise DomainError(f"conf_threshold must lie in (0, 1), got {conf_threshold}")
    confidence = nn.sigmoid(np.asarray(det_map[..., 0], dtype=np.float64))
    neighbourhood = ndimage.maximum_filter(confidence, size=3, mode="constant", cval=-np.inf)
    keep = (confidence > conf_threshold) & (confidence >= neighbourhood)
    # keep decoded positions strictly inside their cell
    offsets = np.clip(nn.sigmoid(np.asarray(det_map[..., 1:], dtype=np.float64)), 0.0, 1.0 - 1e-12)

    detections = []
    for i, j in zip(*np.nonzero(keep)):
        range_bin = (i + offsets[i, j, 0]) * CELL
        doppler_bin = (j + offsets[i, j, 1]) * CELL
        energy = 0.0
        if energy_map is not None:
            ri = min(int(round(range_bin)), energy_map.shape[0] - 1)
            di = min(int(round(doppler_bin)), energy_map.shape[1] - 1)
            energy = float(energy_map[ri, di])
        detections.append(Detection(float(range_bin), float(doppler_bin), float(confidence[i, j]), energy))
    return detections


def detect(tensor: Any, w: WeightSet, conf_threshold: float = 0.5) -> List[Detection]:
    det_map, _ = forward(tensor, w)
    return decode_detections(det_map, conf_threshold, getattr(tensor, "energy_map", None))


# ──────────────────────────────────────────────────────────────────────────────
# Проверка градиентов
# ──────────────────────────────────────────────────────────────────────────────
def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def check_gradients(
    objective: Callable[[Dict[str, np.ndarray]], Any],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    samples: int = 10,
    seed: int = 0,
    fd_dtype: Any = np.longdouble,
) -> float:
    """Max relative error between ``analytic`` and central differences of ``objective``.

    ``samples`` entries per array are drawn at random; the objective is
    evaluated on copies cast to ``fd_dtype``.
    """
    rng = np.random.default_rng(seed)
    work = {name: np.array(value, dtype=fd_dtype) for name, value in params.items()}
    worst = 0.0
    for name in sorted(work):
        array = work[name]
        picks = rng.choice(array.size, size=min(samples, array.size), replace=False)
        for flat_index in picks:
            index = np.unravel_index(int(flat_index), array.shape)
            original = array[index]
            array[index] = original + eps
            plus = objective(work)
            array[index] = original - eps
            minus = objective(work)
            array[index] = original
            numeric = float((plus - minus) / (2 * eps))
            worst = max(worst, relative_error(float(analytic[name][index]), numeric))
    return worst


def grad_check(
    w: WeightSet,
    x: Any,
    truth: Any,
    eps: float = 1e-5,
    samples: int = 10,
    seed: int = 0,
    lambda1: float = 0.7,
    lambda2: float = 0.3,
    fd_dtype: Any = np.longdouble,
) -> float:
    """Finite-difference check of :func:`backward` for every WeightSet array."""
    inputs = _as_input(x)
    det_map, cache = forward(inputs, w)
    result = loss(det_map, truth, lambda1, lambda2)
    grads = backward(cache, result.grad)

    fd_inputs = inputs.astype(fd_dtype)

    def objective(params: Dict[str, np.ndarray]):
        out, _ = forward(fd_inputs, WeightSet(params))
        return loss(out, truth, lambda1, lambda2).total

    return check_gradients(objective, w.params, grads, eps, samples, seed, fd_dtype)
