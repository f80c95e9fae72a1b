"""Tests for echo synthesis, target motion and measurement frames."""
import math

import numpy as np
import pytest

from modules.rd_pipeline import bin_of
from modules.signal_sim import (
    MeasurementModel,
    RadarParams,
    ScenarioConfig,
    TargetState,
    gen_measurement_frame,
    initial_targets,
    noise_power_for_snr,
    pre_snr_for_post,
    rng_stream,
    synth_echo,
    target_echo,
    trajectory,
)
from rdtrack.exceptions import ConfigError, DomainError, OutOfRangeError


@pytest.fixture
def desk():
    return RadarParams.desk64()


@pytest.mark.unit
def test_table1_parameters():
    radar = RadarParams.table1()
    assert radar.T == radar.M / radar.fs
    assert radar.k == radar.B / radar.T
    assert radar.center_doppler_bin == 256
    assert radar.max_range == pytest.approx(136.6, abs=0.1)


@pytest.mark.unit
@pytest.mark.parametrize(
    "kwargs",
    [
        {"f0": 0.0},
        {"B": -1.0},
        {"L": 0},
        {"M": 2.5},
        {"fs": 1e6},
        {"T": 1.0},
    ],
)
def test_radar_params_reject_bad_values(kwargs):
    base = {"f0": 77e9, "B": 561.96e6, "L": 64, "M": 64, "fs": 561.96e6}
    base.update(kwargs)
    with pytest.raises(ConfigError):
        RadarParams(**base)


@pytest.mark.unit
def test_rng_stream_is_keyed_by_seed_frame_and_purpose():
    a = rng_stream(1, 2, "echo-noise").standard_normal(5)
    assert np.array_equal(a, rng_stream(1, 2, "echo-noise").standard_normal(5))
    assert not np.array_equal(a, rng_stream(1, 3, "echo-noise").standard_normal(5))
    assert not np.array_equal(a, rng_stream(2, 2, "echo-noise").standard_normal(5))
    assert not np.array_equal(a, rng_stream(1, 2, "measurement-clutter").standard_normal(5))


@pytest.mark.unit
def test_noise_power_for_snr():
    assert noise_power_for_snr(1.0, 10.0) == pytest.approx(0.1)
    assert noise_power_for_snr(2.0, 0.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        noise_power_for_snr(0.0, 10.0)
    with pytest.raises(DomainError):
        noise_power_for_snr(1.0, math.inf)


@pytest.mark.unit
def test_pre_snr_for_post(desk):
    assert pre_snr_for_post(20.0, desk) == pytest.approx(20.0 - 10.0 * math.log10(64 * 64))


@pytest.mark.unit
def test_target_echo_has_unit_magnitude(desk):
    echo = target_echo(desk, TargetState(5.0, 1500.0, 2.0))
    assert echo.shape == (desk.M, desk.L)
    assert np.allclose(np.abs(echo), 2.0)


@pytest.mark.unit
def test_target_echo_rejects_ambiguous_targets(desk):
    with pytest.raises(OutOfRangeError):
        target_echo(desk, TargetState(5.0, desk.max_velocity * 1.01))
    with pytest.raises(OutOfRangeError):
        target_echo(desk, TargetState(desk.max_range + 1.0, 0.0))


@pytest.mark.unit
def test_target_state_validation():
    with pytest.raises(DomainError):
        TargetState(math.nan, 0.0)
    with pytest.raises(DomainError):
        TargetState(5.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        TargetState(0.0, 3.0)
    with pytest.raises(DomainError):
        TargetState(-4.0, 3.0)


@pytest.mark.unit
def test_synth_echo_noiseless_is_sum_of_echoes(desk):
    targets = [TargetState(5.0, 1500.0), TargetState(11.0, -2500.0, 0.5)]
    cfg = ScenarioConfig(radar=desk, targets=tuple(targets), snr_db=None)
    raw = synth_echo(cfg, 0, targets)
    expected = target_echo(desk, targets[0]) + target_echo(desk, targets[1])
    assert np.array_equal(raw.samples, expected)


@pytest.mark.unit
def test_synth_echo_noise_is_reproducible_and_scaled(desk):
    targets = [TargetState(5.0, 1500.0)]
    cfg = ScenarioConfig(radar=desk, targets=tuple(targets), snr_db=0.0, seed=4)
    first = synth_echo(cfg, 1, targets).samples
    assert np.array_equal(first, synth_echo(cfg, 1, targets).samples)
    assert not np.array_equal(first, synth_echo(cfg, 2, targets).samples)

    noise = first - target_echo(desk, targets[0])
    # 0 dB: noise power equals the unit signal power
    assert float(np.mean(np.abs(noise) ** 2)) == pytest.approx(1.0, rel=0.1)


@pytest.mark.unit
def test_trajectory_moves_at_constant_velocity():
    truth = trajectory([TargetState(50.0, 10.0), TargetState(90.0, -5.0)], 4, 0.2)
    assert len(truth) == 4
    assert [t.range for t in truth[3]] == pytest.approx([56.0, 87.0])
    assert [t.velocity for t in truth[3]] == [10.0, -5.0]


@pytest.mark.unit
def test_random_targets_stay_inside_region():
    cfg = ScenarioConfig(
        radar=RadarParams.table1(),
        frames=30,
        clutter_region=((10.0, 130.0), (-10.0, 10.0)),
        random_targets=(7, 10),
        seed=5,
    )
    targets = initial_targets(cfg)
    assert 7 <= len(targets) <= 10
    assert targets == initial_targets(cfg)
    for frame in trajectory(targets, cfg.frames, cfg.radar.delta_t):
        for t in frame:
            assert 10.0 <= t.range <= 130.0
            assert -10.0 <= t.velocity <= 10.0


@pytest.mark.unit
def test_random_targets_need_region():
    cfg = ScenarioConfig(radar=RadarParams.table1(), random_targets=(1, 2))
    with pytest.raises(ConfigError):
        initial_targets(cfg)


@pytest.mark.unit
def test_measurement_frame_without_noise_hits_truth():
    radar = RadarParams.table1()
    targets = [TargetState(40.0, 3.0), TargetState(80.0, -7.0)]
    cfg = ScenarioConfig(radar=radar, targets=tuple(targets),
                         measurement=MeasurementModel(sigma_r=0.0, sigma_v=0.0))
    dets = gen_measurement_frame(cfg, targets, 0)

    assert len(dets) == 2
    for det, target in zip(dets, targets):
        assert det.position == pytest.approx(bin_of(target.range, target.velocity, radar))
        assert 0.5 <= det.confidence <= 1.0
        assert np.linalg.norm(det.feature) == pytest.approx(1.0)


@pytest.mark.unit
def test_measurement_frame_clutter_is_deterministic():
    radar = RadarParams.table1()
    cfg = ScenarioConfig(radar=radar, clutter_rate=50.0, clutter_region=((10.0, 130.0), (-10.0, 10.0)), seed=2)
    first = gen_measurement_frame(cfg, [], 3)
    second = gen_measurement_frame(cfg, [], 3)
    assert [d.position for d in first] == [d.position for d in second]
    assert all(0.0 <= d.confidence <= 0.3 for d in first)
    assert len(first) > 0


@pytest.mark.unit
def test_measurement_clutter_needs_region():
    cfg = ScenarioConfig(radar=RadarParams.table1(), clutter_rate=5.0)
    with pytest.raises(ConfigError):
        gen_measurement_frame(cfg, [], 0)
