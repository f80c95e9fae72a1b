"""End-to-end tests through the installed command line."""
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from modules.eval_metrics import summarize
from modules.experiment_runner import measurement_frames, run_tracker, track_ospa
from modules.scenario_config import load_scenario
from modules.signal_sim import initial_targets, trajectory
from modules.tracker import TrackerConfig

ROOT = Path(__file__).resolve().parents[1]


def _rdtrack(*args, env_out=None):
    env = None
    if env_out is not None:
        env = dict(os.environ, RDTRACK_OUT=str(env_out))
    return subprocess.run(
        [sys.executable, "-m", "rdtrack", *args],
        cwd=ROOT,
        capture_output=True,
        text=True,
        timeout=600,
        env=env,
    )


@pytest.mark.integration
def test_cli_info():
    result = _rdtrack("--info")

    assert result.returncode == 0
    assert "rdtrack" in result.stdout


@pytest.mark.integration
def test_cli_help():
    result = _rdtrack("--help")

    assert result.returncode == 0
    assert "simulate" in result.stdout
    assert "e2e" in result.stdout


@pytest.mark.integration
def test_cli_exit_codes(tmp_path):
    assert _rdtrack("simulate", "--config", str(tmp_path / "missing.cfg")).returncode == 1
    assert _rdtrack("detect", str(tmp_path), "--out", str(tmp_path / "o")).returncode == 2
    assert _rdtrack("frobnicate").returncode == 1


@pytest.mark.integration
def test_cli_simulate_detect_eval(tmp_path):
    sim = tmp_path / "sim"
    result = _rdtrack("simulate", "--config", "scenarios/desk64.cfg", "--out", str(sim), "--snr-db", "-10")
    assert result.returncode == 0, result.stderr
    assert len(list(sim.glob("frame_*.rdm"))) == 4

    result = _rdtrack("detect", str(sim), "--detector", "cfar", "--out", str(tmp_path / "det"))
    assert result.returncode == 0, result.stderr

    result = _rdtrack("eval", "--input", str(sim), "--detections", str(tmp_path / "det" / "detections.csv"),
                      "--out", str(tmp_path / "eval"))
    assert result.returncode == 0, result.stderr
    lines = (tmp_path / "eval" / "metrics.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "frame,pd,pfa,ospa"
    assert len(lines) == 5


@pytest.mark.integration
def test_cli_default_output_root(tmp_path):
    result = _rdtrack("simulate", "--config", "scenarios/desk64.cfg", env_out=tmp_path)

    assert result.returncode == 0, result.stderr
    manifest = json.loads((tmp_path / "simulate" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["frames"][0] == "frame_0000.rdm"


@pytest.mark.integration
def test_cli_health_json(tmp_path):
    result = _rdtrack("health", "--json", env_out=tmp_path)

    payload = json.loads(result.stdout)
    assert result.returncode == (0 if payload["status"] == "healthy" else 1)


@pytest.mark.slow
def test_confidence_and_features_beat_the_ablated_tracker():
    base = load_scenario(ROOT / "scenarios" / "tracking_clutter.cfg")
    full_means, ablated_means = [], []
    for seed in range(20):
        cfg = base.with_seed(seed)
        truth = trajectory(initial_targets(cfg), cfg.frames, cfg.radar.delta_t)
        frames = measurement_frames(cfg, truth)
        full = run_tracker(cfg, frames, TrackerConfig())
        ablated = run_tracker(cfg, frames, TrackerConfig(fixed_r=True, position_only=True))
        full_means.append(summarize(track_ospa(full.history, truth)).mean)
        ablated_means.append(summarize(track_ospa(ablated.history, truth)).mean)

    assert summarize(full_means).mean <= summarize(ablated_means).mean
