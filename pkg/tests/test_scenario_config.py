"""Tests for scenario text files and e2e run manifests."""
from pathlib import Path

import pytest

from modules.scenario_config import (
    dump_scenario,
    load_manifest,
    load_scenario,
    parse_scenario,
    parse_scenario_text,
    write_scenario,
)
from modules.signal_sim import RadarParams, TargetState
from rdtrack.exceptions import ConfigError
from utils.paths import default_output_root

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

MINIMAL = """
[radar]
f0 = 77e9
B = 561.96e6
L = 64
M = 64
fs = 561.96e6

[run]
frames = 2
"""


@pytest.mark.unit
def test_bundled_table1_scenario():
    cfg = load_scenario(SCENARIOS / "table1.cfg")
    assert cfg.radar == RadarParams.table1()
    assert cfg.targets == (TargetState(50.0, 10.0, 1.0), TargetState(92.5, -6.0, 0.8))
    assert cfg.snr_db == -20.0
    assert cfg.frames == 3


@pytest.mark.unit
def test_bundled_clutter_scenario():
    cfg = load_scenario(SCENARIOS / "tracking_clutter.cfg")
    assert cfg.random_targets == (7, 10)
    assert cfg.snr_db is None
    assert cfg.clutter_rate == 3000.0
    assert cfg.clutter_region == ((10.0, 130.0), (-10.0, 10.0))
    assert cfg.measurement.clutter_confidence == (0.0, 0.3)


@pytest.mark.unit
def test_minimal_scenario_uses_defaults():
    cfg = parse_scenario(MINIMAL)
    assert cfg.targets == ()
    assert cfg.seed == 0
    assert cfg.snr_db is None
    assert cfg.radar.T == pytest.approx(64 / 561.96e6)


@pytest.mark.unit
@pytest.mark.parametrize("name", ["table1.cfg", "desk64.cfg", "tracking_clutter.cfg"])
def test_dump_reads_back_to_equal_config(name, tmp_path):
    cfg = load_scenario(SCENARIOS / name)
    assert parse_scenario(dump_scenario(cfg)) == cfg
    assert load_scenario(write_scenario(cfg, tmp_path / name)) == cfg


@pytest.mark.unit
def test_comments_and_repeated_targets():
    text = MINIMAL.replace("[run]", "[targets]\ntarget = 1,2  # first\n; ignored\ntarget = 3,4,0.5\n\n[run]")
    mapping = parse_scenario_text(text)
    assert mapping["targets"]["target"] == [[1.0, 2.0], [3.0, 4.0, 0.5]]


@pytest.mark.unit
@pytest.mark.parametrize(
    "text, line, fragment",
    [
        (MINIMAL + "[bogus]\n", 11, "unknown section"),
        (MINIMAL + "[radar]\n", 11, "appears twice"),
        (MINIMAL + "frames = 3\n", 11, "repeated"),
        (MINIMAL + "speed = 3\n", 11, "unknown key"),
        (MINIMAL + "seed = x\n", 11, "bad value"),
        (MINIMAL + "no equals sign\n", 11, "key = value"),
        ("f0 = 1\n", 1, "outside"),
        ("[radar\n", 1, "malformed"),
        (MINIMAL + "[targets]\ntarget = 50,10,0\n", 12, "amplitude must be positive"),
        (MINIMAL + "[targets]\ntarget = 1,2\ntarget = -3,4\n", 13, "range must be positive"),
        (MINIMAL + "[targets]\ntarget = 1,2,3,4\n", 12, "range,velocity"),
    ],
)
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(text, path="bad.cfg")
    assert info.value.line == line
    assert fragment in str(info.value)
    assert str(info.value).startswith(f"bad.cfg:{line}: ")


@pytest.mark.unit
def test_semantic_errors():
    with pytest.raises(ConfigError, match="missing required section"):
        parse_scenario("[radar]\nf0 = 1\n")
    with pytest.raises(ConfigError, match="validation"):
        parse_scenario(MINIMAL.replace("L = 64", "L = 0"))
    with pytest.raises(ConfigError):
        parse_scenario(MINIMAL.replace("fs = 561.96e6", "fs = 1e6"))
    with pytest.raises(ConfigError, match="not found"):
        load_scenario("/nonexistent/scenario.cfg")


def _manifest(tmp_path, body):
    (tmp_path / "scene.cfg").write_text(MINIMAL, encoding="utf-8")
    path = tmp_path / "run.yml"
    path.write_text(body, encoding="utf-8")
    return path


@pytest.mark.unit
def test_manifest_resolves_relative_paths(tmp_path):
    path = _manifest(tmp_path, "scenario: scene.cfg\nseeds: [0, 3]\noutput: out\ntracker:\n  mu: 0.5\n")
    manifest = load_manifest(path)
    assert manifest.scenario == tmp_path / "scene.cfg"
    assert manifest.seeds == (0, 3)
    assert manifest.output == tmp_path / "out"
    assert manifest.mu == 0.5
    assert manifest.detectors == ("cfar", "montecarlo")
    assert load_manifest(path, output=tmp_path / "elsewhere").output == tmp_path / "elsewhere"


@pytest.mark.unit
def test_manifest_default_output_follows_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RDTRACK_OUT", str(tmp_path / "env-out"))
    assert default_output_root() == tmp_path / "env-out"
    manifest = load_manifest(_manifest(tmp_path, "scenario: scene.cfg\nseeds: [1]\n"))
    assert manifest.output == tmp_path / "env-out" / "e2e"
    monkeypatch.delenv("RDTRACK_OUT")
    assert default_output_root() == Path("results")


@pytest.mark.unit
@pytest.mark.parametrize(
    "body",
    [
        "scenario: scene.cfg\n",
        "scenario: scene.cfg\nseeds: []\n",
        "scenario: scene.cfg\nseeds: [0]\ndetectors: [radar]\n",
        "scenario: missing.cfg\nseeds: [0]\n",
        "scenario: scene.cfg\nseeds: [0]\nextra: 1\n",
        "- just\n- a list\n",
    ],
)
def test_manifest_errors(tmp_path, body):
    with pytest.raises(ConfigError):
        load_manifest(_manifest(tmp_path, body))


@pytest.mark.unit
def test_manifest_yaml_error_reports_line(tmp_path):
    path = _manifest(tmp_path, "scenario: scene.cfg\nseeds: [0\n")
    with pytest.raises(ConfigError) as info:
        load_manifest(path)
    assert info.value.line is not None


@pytest.mark.unit
def test_bundled_manifest_loads():
    manifest = load_manifest(SCENARIOS / "e2e.yml")
    assert manifest.detection_scenario == SCENARIOS / "desk64.cfg"
    assert manifest.detectors == ("cfar", "montecarlo", "neural")
    assert manifest.training.samples == 64
