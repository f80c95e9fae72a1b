"""Tests for the classical Range-Doppler chain and the RDM / truth files."""
import math
import struct

import numpy as np
import pytest

from modules.rd_pipeline import (
    RDM_HEADER,
    GroundTruthFrame,
    RDMatrix,
    bin_of,
    coherent_integrate,
    inverse_integrate,
    phys_of,
    pulse_compress,
    range_doppler,
    read_rdm,
    read_truth,
    three_channel,
    truth_frame,
    write_rdm,
    write_truth,
)
from modules.signal_sim import RadarParams, RawEchoMatrix, ScenarioConfig, TargetState, rng_stream, synth_echo
from rdtrack.exceptions import (
    BadMagicError,
    DataError,
    DimensionOverflowError,
    OutOfRangeError,
    RdmFormatError,
    ShapeError,
    TruncatedFileError,
)


def _noise(params, seed=0):
    rng = rng_stream(seed, 0, "test-noise")
    shape = (params.M, params.L)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _on_grid_target(params, range_bin, doppler_bin):
    return TargetState(*phys_of(range_bin, doppler_bin, params))


@pytest.mark.unit
def test_pulse_compression_preserves_column_energy():
    params = RadarParams.desk64()
    raw = RawEchoMatrix(_noise(params), params)
    compressed = pulse_compress(raw)
    before = np.sum(np.abs(raw.samples) ** 2, axis=0)
    after = np.sum(np.abs(compressed) ** 2, axis=0)
    assert np.allclose(after, before, rtol=1e-9, atol=0.0)


@pytest.mark.unit
def test_point_target_peaks_at_its_bins():
    params = RadarParams.desk64()
    target = _on_grid_target(params, 20, 40)
    cfg = ScenarioConfig(radar=params, targets=(target,), snr_db=None)
    rd = range_doppler(synth_echo(cfg, 0, [target]))
    peak = np.unravel_index(np.argmax(rd.energy()), rd.shape)
    assert tuple(int(v) for v in peak) == (20, 40)


@pytest.mark.integration
@pytest.mark.parametrize(
    "params, expected_db",
    [(RadarParams.table1(), 27.09), (RadarParams.desk64(), 18.06)],
    ids=["L512", "L64"],
)
def test_coherent_integration_gain(params, expected_db):
    range_bin, doppler_bin = params.M // 4, params.L // 2 + 4
    target = _on_grid_target(params, range_bin, doppler_bin)
    cfg = ScenarioConfig(radar=params, targets=(target,), snr_db=None)
    signal = synth_echo(cfg, 0, [target])
    noise = RawEchoMatrix(_noise(params, seed=7), params)

    signal_c = pulse_compress(signal)
    noise_c = pulse_compress(noise)
    pre_snr = np.mean(np.abs(signal_c[range_bin]) ** 2) / np.mean(np.abs(noise_c) ** 2)

    signal_rd = coherent_integrate(signal_c)
    noise_rd = coherent_integrate(noise_c)
    post_snr = np.abs(signal_rd.cells[range_bin, doppler_bin]) ** 2 / np.mean(noise_rd.energy())

    gain_db = 10.0 * math.log10(post_snr / pre_snr)
    assert gain_db == pytest.approx(expected_db, abs=0.5)


@pytest.mark.unit
def test_inverse_integrate_round_trip():
    params = RadarParams.desk64()
    compressed = _noise(params, seed=3)
    assert np.allclose(inverse_integrate(coherent_integrate(compressed)), compressed, atol=1e-12)


@pytest.mark.unit
def test_rd_matrix_validation():
    with pytest.raises(ShapeError):
        RDMatrix(np.zeros(4))
    with pytest.raises(ShapeError):
        RDMatrix(np.zeros((3, 3)), RadarParams.desk64())
    with pytest.raises(DataError):
        RDMatrix(np.array([[np.nan, 0.0]]))


@pytest.mark.unit
def test_three_channel_single_cell():
    cells = np.zeros((8, 8), dtype=complex)
    cells[2, 5] = 3 + 4j
    tensor = three_channel(RDMatrix(cells))

    assert tensor.channels.shape == (8, 8, 3)
    amplitude = tensor.channels[..., 0]
    assert np.count_nonzero(amplitude == 1.0) == 1
    assert amplitude[2, 5] == 1.0
    assert tensor.energy_map[2, 5] == pytest.approx(25.0)


@pytest.mark.unit
def test_three_channel_range_and_constant_input():
    params = RadarParams.desk64()
    tensor = three_channel(RDMatrix(_noise(params)))
    assert tensor.channels.min() >= 0.0
    assert tensor.channels.max() <= 1.0
    flat = three_channel(np.ones((4, 4), dtype=complex))
    assert np.all(flat.channels == 0.0)


@pytest.mark.unit
def test_bin_of_and_phys_of_are_inverse():
    params = RadarParams.table1()
    range_bin, doppler_bin = bin_of(50.0, 10.0, params)
    assert phys_of(range_bin, doppler_bin, params) == pytest.approx((50.0, 10.0))

    ranges = np.array([10.0, 60.0, 120.0])
    velocities = np.array([-9.0, 0.0, 9.0])
    rb, db = bin_of(ranges, velocities, params)
    back_r, back_v = phys_of(rb, db, params)
    assert np.allclose(back_r, ranges)
    assert np.allclose(back_v, velocities)
    assert db[1] == params.center_doppler_bin


@pytest.mark.unit
def test_bin_of_rejects_out_of_extent():
    params = RadarParams.table1()
    with pytest.raises(OutOfRangeError):
        bin_of(params.max_range + 1.0, 0.0, params)
    with pytest.raises(OutOfRangeError):
        bin_of(np.array([10.0, 20.0]), np.array([0.0, 2 * params.max_velocity]), params)


@pytest.mark.unit
def test_rdm_file_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    for index in range(100):
        rows, cols = (int(v) for v in rng.integers(1, 12, size=2))
        cells = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        path = write_rdm(RDMatrix(cells), tmp_path / f"m{index}.rdm")
        assert np.array_equal(read_rdm(path).cells, cells)


@pytest.mark.unit
def test_rdm_layout(tmp_path):
    path = write_rdm(RDMatrix(np.array([[1 + 2j, 3 - 4j]])), tmp_path / "a.rdm")
    data = path.read_bytes()
    assert data[:4] == b"RDM1"
    assert struct.unpack_from("<II", data, 4) == (1, 2)
    assert struct.unpack_from("<4d", data, RDM_HEADER.size) == (1.0, 2.0, 3.0, -4.0)


@pytest.mark.unit
def test_rdm_errors(tmp_path):
    good = write_rdm(RDMatrix(np.ones((2, 2), dtype=complex)), tmp_path / "good.rdm").read_bytes()

    cases = {
        "magic.rdm": (b"XXXX" + good[4:], BadMagicError),
        "short.rdm": (good[:-8], TruncatedFileError),
        "header.rdm": (good[:6], TruncatedFileError),
        "trailing.rdm": (good + b"\x00", RdmFormatError),
        "zero.rdm": (RDM_HEADER.pack(b"RDM1", 0, 4), DimensionOverflowError),
        "huge.rdm": (RDM_HEADER.pack(b"RDM1", 1 << 20, 1 << 20), DimensionOverflowError),
    }
    for name, (payload, error) in cases.items():
        path = tmp_path / name
        path.write_bytes(payload)
        with pytest.raises(error):
            read_rdm(path)


@pytest.mark.unit
def test_truth_file(tmp_path):
    params = RadarParams.table1()
    frames = [
        truth_frame([TargetState(50.0, 10.0)], params, 0),
        GroundTruthFrame([], 1),
        truth_frame([TargetState(52.0, 10.0), TargetState(90.0, -6.0)], params, 2),
    ]
    path = write_truth(frames, tmp_path / "truth.csv")
    loaded = read_truth(path, frames=3)

    assert sorted(loaded) == [0, 1, 2]
    assert loaded[0].entries == frames[0].entries
    assert loaded[1].entries == []
    assert loaded[2].entries == frames[2].entries


@pytest.mark.unit
def test_truth_file_errors(tmp_path):
    with pytest.raises(DataError):
        read_truth(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("frame_index,range_bin,doppler_bin\n0,abc,1\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_truth(bad)
    header = tmp_path / "header.csv"
    header.write_text("a,b,c\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_truth(header)
