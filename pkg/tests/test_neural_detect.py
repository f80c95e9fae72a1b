"""Tests for the neural detector: shapes, loss, decoding and gradient verification."""
import math

import numpy as np
import pytest

from modules import nn_layers
from modules.neural_detect import (
    ARCHITECTURE,
    CELL,
    WeightSet,
    backward,
    batch_loss,
    decode_detections,
    detect,
    forward,
    grad_check,
    loss,
)
from modules.rd_pipeline import GroundTruthFrame, RDTensor
from rdtrack.exceptions import DomainError, OutOfRangeError, ShapeError, StaleCacheError


@pytest.fixture(scope="module")
def weights():
    return WeightSet.initialize(seed=3)


@pytest.fixture
def small_input():
    return np.random.default_rng(0).uniform(0.0, 1.0, size=(32, 32, 3))


@pytest.mark.unit
def test_initialized_weights_match_architecture(weights):
    assert weights.missing() == []
    assert weights.mismatched() == []
    assert set(weights.names()) == set(ARCHITECTURE)
    assert np.all(weights["enc1.in.g"] == 1.0)
    assert np.all(weights["head.b"] == 0.0)


@pytest.mark.unit
def test_forward_shapes(weights):
    rng = np.random.default_rng(1)
    single, _ = forward(rng.uniform(size=(64, 64, 3)), weights)
    assert single.shape == (64 // CELL, 64 // CELL, 3)
    batch, cache = forward(rng.uniform(size=(2, 64, 64, 3)), weights)
    assert batch.shape == (2, 8, 8, 3)
    assert cache.batched


@pytest.mark.unit
def test_forward_accepts_rd_tensor(weights, small_input):
    direct, _ = forward(small_input, weights)
    wrapped, _ = forward(RDTensor(small_input), weights)
    assert np.array_equal(direct, wrapped)


@pytest.mark.unit
@pytest.mark.parametrize("shape", [(48, 32, 3), (32, 32, 2), (32,)])
def test_forward_rejects_bad_shapes(weights, shape):
    with pytest.raises(ShapeError):
        forward(np.zeros(shape), weights)


@pytest.mark.unit
def test_loss_decomposition_is_exact():
    rng = np.random.default_rng(5)
    det_map = rng.standard_normal((4, 4, 3))
    truth = GroundTruthFrame([(3.5, 9.25), (20.0, 30.0)])
    result = loss(det_map, truth, lambda1=0.7, lambda2=0.3)
    assert result.total == 0.7 * result.position + 0.3 * result.confidence
    assert result.duplicates == 0


@pytest.mark.unit
def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    det_map = rng.standard_normal((4, 4, 3))
    truth = [(3.5, 9.25), (20.0, 30.0)]
    analytic = loss(det_map, truth).grad
    eps = 1e-6
    for index in [(0, 1, 0), (0, 1, 1), (0, 1, 2), (2, 3, 2), (3, 3, 0)]:
        plus, minus = det_map.copy(), det_map.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric = (loss(plus, truth).total - loss(minus, truth).total) / (2 * eps)
        assert analytic[index] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


@pytest.mark.unit
def test_loss_counts_shared_cells_and_rejects_outside_truth():
    det_map = np.zeros((2, 2, 3))
    assert loss(det_map, [(1.0, 1.0), (2.0, 2.0)]).duplicates == 1
    with pytest.raises(OutOfRangeError):
        loss(det_map, [(16.0, 1.0)])
    with pytest.raises(ShapeError):
        loss(np.zeros((2, 2)), [])


@pytest.mark.unit
def test_batch_loss_sums_frames():
    rng = np.random.default_rng(2)
    maps = rng.standard_normal((2, 4, 4, 3))
    truths = [[(4.0, 4.0)], []]
    combined = batch_loss(maps, truths)
    assert combined.total == pytest.approx(loss(maps[0], truths[0]).total + loss(maps[1], truths[1]).total)
    assert combined.grad.shape == maps.shape
    with pytest.raises(ShapeError):
        batch_loss(maps, truths[:1])


@pytest.mark.unit
def test_decode_single_peak():
    det_map = np.full((4, 4, 3), -10.0)
    det_map[1, 2, 0] = 5.0
    det_map[1, 2, 1] = 0.0
    det_map[1, 2, 2] = math.log(3.0)
    energy = np.zeros((32, 32))
    energy[12, 22] = 7.0

    dets = decode_detections(det_map, 0.5, energy)
    assert len(dets) == 1
    assert dets[0].range_bin == pytest.approx((1 + 0.5) * CELL)
    assert dets[0].doppler_bin == pytest.approx((2 + 0.75) * CELL)
    assert dets[0].confidence == pytest.approx(1.0 / (1.0 + math.exp(-5.0)))
    assert dets[0].energy == 7.0


@pytest.mark.unit
def test_decode_keeps_local_maxima_only():
    det_map = np.full((4, 4, 3), -10.0)
    det_map[1, 1, 0] = 4.0
    det_map[1, 2, 0] = 3.0
    det_map[3, 3, 0] = 2.0
    dets = decode_detections(det_map, 0.5)
    assert sorted((int(d.range_bin // CELL), int(d.doppler_bin // CELL)) for d in dets) == [(1, 1), (3, 3)]
    with pytest.raises(DomainError):
        decode_detections(det_map, 1.0)


@pytest.mark.unit
def test_detect_returns_detections_on_the_grid(weights, small_input):
    for det in detect(small_input, weights, conf_threshold=0.01):
        assert det.within((32, 32))


@pytest.mark.unit
def test_backward_rejects_stale_cache(weights, small_input):
    w = weights.copy()
    det_map, cache = forward(small_input, w)
    w["head.b"] = w["head.b"] + 1.0
    with pytest.raises(StaleCacheError):
        backward(cache, loss(det_map, []).grad)


@pytest.mark.unit
def test_backward_covers_every_parameter(weights, small_input):
    det_map, cache = forward(small_input, weights)
    grads = backward(cache, loss(det_map, [(10.0, 20.0)]).grad)
    assert set(grads) == set(ARCHITECTURE)
    for name, grad in grads.items():
        assert grad.shape == weights[name].shape
        assert np.all(np.isfinite(grad))


@pytest.mark.integration
def test_end_to_end_gradient_check(weights, small_input):
    error = grad_check(weights, small_input, [(10.3, 21.7), (25.0, 4.0)], eps=1e-6, samples=3, seed=1)
    assert error < 1e-6


@pytest.mark.integration
def test_gradient_check_catches_corrupted_conv_gradient(weights, small_input, monkeypatch):
    original = nn_layers.conv2d_backward

    def corrupted(dout, cache):
        dx, dw, db = original(dout, cache)
        return dx, dw * 1.1, db

    monkeypatch.setattr(nn_layers, "conv2d_backward", corrupted)
    error = grad_check(weights, small_input, [(10.3, 21.7)], eps=1e-5, samples=3, seed=1)
    assert error > 1e-2
