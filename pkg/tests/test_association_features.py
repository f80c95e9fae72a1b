"""Tests for RD patch embeddings and feature distances."""
import numpy as np
import pytest

from modules.association_features import (
    FEATURE_DIM,
    PATCH,
    EmbedWeights,
    cosine_distance,
    default_embed_weights,
    ema_update,
    embed_detections,
    embed_patch,
    extract_patch,
    load_embed_weights,
    min_cosine_distance,
    save_embed_weights,
)
from modules.classic_detect import Detection
from modules.weight_store import write_weights
from rdtrack.exceptions import DomainError, WeightFileError


@pytest.fixture
def channels():
    return np.random.default_rng(4).uniform(size=(32, 32, 3))


@pytest.mark.unit
def test_extract_patch_is_centred(channels):
    patch = extract_patch(channels, 12.7, 20.2)
    assert patch.shape == (PATCH, PATCH, 3)
    assert np.array_equal(patch[PATCH // 2, PATCH // 2], channels[12, 20])
    assert np.array_equal(patch, channels[4:20, 12:28])


@pytest.mark.unit
def test_extract_patch_zero_pads_at_the_edge(channels):
    patch = extract_patch(channels, 2.0, 30.0)
    assert np.all(patch[:6] == 0.0)
    assert np.all(patch[:, 10:] == 0.0)
    assert np.array_equal(patch[6:, :10], channels[0:10, 22:32])


@pytest.mark.unit
def test_embedding_has_unit_norm_and_is_deterministic(channels):
    det = Detection(12.0, 20.0, 0.8)
    feature = embed_patch(channels, det)
    assert feature.shape == (FEATURE_DIM,)
    assert np.linalg.norm(feature) == pytest.approx(1.0)
    assert np.array_equal(feature, embed_patch(channels, det, default_embed_weights()))


@pytest.mark.unit
def test_vanishing_response_maps_to_first_basis_vector():
    feature = embed_patch(np.zeros((32, 32, 3)), Detection(5.0, 5.0, 0.5))
    assert feature[0] == 1.0
    assert np.count_nonzero(feature) == 1


@pytest.mark.unit
def test_embed_detections_attaches_features(channels):
    dets = embed_detections(channels, [Detection(3.0, 4.0, 0.5), Detection(20.0, 9.0, 0.7)])
    assert all(d.feature is not None for d in dets)
    assert dets[0].position == (3.0, 4.0)


@pytest.mark.unit
def test_cosine_distances():
    e1, e2 = np.eye(2)
    assert cosine_distance(e1, e1) == 0.0
    assert cosine_distance(e1, e2) == 1.0
    assert cosine_distance(e1, -e1) == 2.0
    assert min_cosine_distance(e1, []) == 1.0
    assert min_cosine_distance(e1, [e2, -e1, e1]) == 0.0


@pytest.mark.unit
def test_ema_update():
    e1, e2 = np.eye(2)
    blended = ema_update(e1, e2, alpha=0.5)
    assert blended == pytest.approx([np.sqrt(0.5), np.sqrt(0.5)])
    assert np.array_equal(ema_update(e1, e2, alpha=1.0), e1)
    assert np.array_equal(ema_update(e1, -e1, alpha=0.5), e1)
    with pytest.raises(DomainError):
        ema_update(e1, e2, alpha=1.5)


@pytest.mark.unit
def test_embed_weight_files(tmp_path):
    weights = default_embed_weights(seed=3)
    loaded = load_embed_weights(save_embed_weights(weights, tmp_path / "embed.bin"))
    assert np.array_equal(loaded.w, weights.w)
    assert np.array_equal(loaded.b, weights.b)

    with pytest.raises(WeightFileError):
        load_embed_weights(write_weights({"embed.w": weights.w}, tmp_path / "partial.bin"))
    with pytest.raises(WeightFileError):
        EmbedWeights(np.zeros((3, 3, 3, 8)), np.zeros(8))
