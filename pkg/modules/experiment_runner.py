# modules/experiment_runner.py
"""Command implementations: simulate, detect, train, track, eval and e2e.

Every command writes into its own output directory, keeps an ``events.jsonl``
run log there and produces deterministic CSV / RDM / weight artifacts for a
given scenario and seed.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.classic_detect import (
    CfarConfig,
    Detection,
    ca_cfar,
    dbscan_cluster,
    monte_carlo_threshold,
    threshold_detect,
    truth_mask,
)
from modules.eval_metrics import OspaParams, ospa, pd_pfa, target_points, track_points
from modules.neural_detect import WeightSet, detect
from modules.rd_pipeline import (
    GroundTruthFrame,
    RDMatrix,
    phys_of,
    range_doppler,
    read_rdm,
    read_truth,
    three_channel,
    truth_frame,
    write_rdm,
    write_truth,
)
from modules.report_generator import (
    generate_report,
    plot_detection_sweep,
    plot_loss,
    plot_tracking_ospa,
    read_detections,
    read_tracks,
    write_detection_sweep,
    write_detections,
    write_loss,
    write_metrics,
    write_tracking_ospa,
    write_tracks,
)
from modules.scenario_config import (
    RunManifest,
    dump_scenario,
    load_manifest,
    load_scenario,
    write_scenario,
)
from modules.signal_sim import (
    RadarParams,
    ScenarioConfig,
    TargetState,
    gen_measurement_frame,
    initial_targets,
    pre_snr_for_post,
    synth_echo,
    trajectory,
)
from modules.tracker import MotionModel, StepResult, Tracker, TrackerConfig, TrackStatus
from modules.trainer import TrainConfig, build_dataset, split_dataset, train
from modules.weight_store import load_weight_set, write_weights
from rdtrack.exceptions import ConfigError, DataError
from utils.logger import log_context, log_debug, log_fail, log_info, log_pass, log_section
from utils.run_logger import RunLogger

PathLike = Union[str, Path]

WORKERS_ENV = "RDTRACK_WORKERS"
SIM_MANIFEST = "manifest.json"
DETECTORS = ("cfar", "montecarlo", "neural")

_UNSET: Any = object()


def worker_count(requested: Optional[int], jobs: int) -> int:
    """Thread count for per-seed work; 0 or None falls back to RDTRACK_WORKERS, then to auto."""
    if not requested:
        raw = os.environ.get(WORKERS_ENV, "0")
        try:
            requested = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got '{raw}'") from exc
    if requested < 0:
        raise ConfigError(f"worker count must be >= 0, got {requested}")
    if requested == 0:
        requested = os.cpu_count() or 1
    return max(1, min(requested, jobs))


@contextmanager
def command_run(out: Path, command: str, **details: Any) -> Iterator[RunLogger]:
    """Create ``out`` and bracket the command with run.start / run.complete or run.failed events."""
    out.mkdir(parents=True, exist_ok=True)
    events = RunLogger(out / "events.jsonl", command=command)
    started = time.monotonic()
    events.log_run_start(**details)
    try:
        yield events
    except BaseException as exc:
        events.log_run_failed(exc)
        raise
    else:
        events.log_run_complete(time.monotonic() - started)
    finally:
        events.close()


def _scenario(config: PathLike, seed: Optional[int], snr_db: Any = _UNSET) -> ScenarioConfig:
    cfg = load_scenario(config)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if snr_db is not _UNSET:
        cfg = cfg.with_snr(snr_db)
    return cfg


# ──────────────────────────────────────────────────────────────────────────────
# simulate
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class SimulationResult:
    out: Path
    rdm_files: List[Path]
    truth_file: Path
    manifest_file: Path


def cmd_simulate(config: PathLike, out: PathLike, seed: Optional[int] = None,
                 snr_db: Any = _UNSET) -> SimulationResult:
    """One RDM file per frame plus truth.csv, scenario.cfg and manifest.json."""
    out_dir = Path(out)
    cfg = _scenario(config, seed, snr_db)
    with command_run(out_dir, "simulate", config=str(config), seed=cfg.seed) as events:
        radar = cfg.radar
        truth_traj = trajectory(initial_targets(cfg), cfg.frames, radar.delta_t)
        rdm_files: List[Path] = []
        truths: List[GroundTruthFrame] = []
        events.log_stage("simulate", seed=cfg.seed, frames=cfg.frames)
        for frame, targets in enumerate(truth_traj):
            rd = range_doppler(synth_echo(cfg, frame, targets))
            path = write_rdm(rd, out_dir / f"frame_{frame:04d}.rdm")
            events.log_artifact(path, "rdm", seed=cfg.seed)
            rdm_files.append(path)
            truths.append(truth_frame(targets, radar, frame))
        events.log_stage("simulate", done=True, seed=cfg.seed)

        truth_file = write_truth(truths, out_dir / "truth.csv")
        scenario_file = write_scenario(cfg, out_dir / "scenario.cfg")
        manifest = {
            "scenario": dump_scenario(cfg),
            "scenario_file": scenario_file.name,
            "frames": [p.name for p in rdm_files],
            "truth": truth_file.name,
            "seed": cfg.seed,
            "snr_db": cfg.snr_db,
            "radar": {"f0": radar.f0, "B": radar.B, "L": radar.L, "M": radar.M, "fs": radar.fs,
                      "delta_t": radar.delta_t, "T": radar.T},
        }
        manifest_file = out_dir / SIM_MANIFEST
        manifest_file.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for path, kind in ((truth_file, "truth"), (scenario_file, "scenario"), (manifest_file, "manifest")):
            events.log_artifact(path, kind, seed=cfg.seed)
    log_pass(f"simulated {cfg.frames} frame(s) into {out_dir}")
    return SimulationResult(out_dir, rdm_files, truth_file, manifest_file)


@dataclass
class SimulationSet:
    """A ``simulate`` output directory read back."""

    root: Path
    radar: RadarParams
    frames: List[Path]
    truth: Dict[int, GroundTruthFrame]
    scenario_file: Path

    def rd(self, index: int) -> RDMatrix:
        return read_rdm(self.frames[index], self.radar)


def load_simulation(path: PathLike) -> SimulationSet:
    root = Path(path)
    manifest_file = root / SIM_MANIFEST
    if not manifest_file.is_file():
        raise DataError(f"{root} is not a simulation directory (no {SIM_MANIFEST})")
    try:
        manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
        radar = RadarParams(**manifest["radar"])
        frames = [root / name for name in manifest["frames"]]
        truth_name = manifest["truth"]
        scenario_file = root / manifest["scenario_file"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{manifest_file}: unreadable simulation manifest ({exc})") from exc
    missing = [p.name for p in frames if not p.is_file()]
    if missing:
        raise DataError(f"{root}: missing RDM files: {', '.join(missing)}")
    truth = read_truth(root / truth_name, frames=len(frames))
    return SimulationSet(root, radar, frames, truth, scenario_file)


# ──────────────────────────────────────────────────────────────────────────────
# detect
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class DetectorSettings:
    detector: str = "cfar"
    pfa: float = 1e-5
    conf_threshold: float = 0.5
    cluster: bool = False
    cfar: CfarConfig = field(default_factory=CfarConfig)
    weights: Optional[WeightSet] = None

    def __post_init__(self) -> None:
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector '{self.detector}' (choose from {', '.join(DETECTORS)})")
        if self.detector == "neural" and self.weights is None:
            raise ConfigError("the neural detector needs --weights")


def run_detector(rd: RDMatrix, truth: GroundTruthFrame, settings: DetectorSettings) -> List[Detection]:
    if settings.detector == "cfar":
        dets = ca_cfar(rd, settings.cfar)
    elif settings.detector == "montecarlo":
        threshold = monte_carlo_threshold(rd, truth_mask(truth, rd.shape), settings.pfa)
        dets = threshold_detect(rd, threshold)
    else:
        assert settings.weights is not None
        dets = detect(three_channel(rd), settings.weights, settings.conf_threshold)
    if settings.cluster:
        dets = dbscan_cluster(dets)
    return dets


def cmd_detect(input_dir: PathLike, out: PathLike, detector: str = "cfar", pfa: float = 1e-5,
               weights: Optional[PathLike] = None, conf_threshold: float = 0.5, cluster: bool = False) -> Path:
    """Run one detector over a simulation directory and write detections.csv."""
    out_dir = Path(out)
    with command_run(out_dir, "detect", input=str(input_dir), detector=detector) as events:
        sim = load_simulation(input_dir)
        settings = DetectorSettings(
            detector=detector, pfa=pfa, conf_threshold=conf_threshold, cluster=cluster,
            weights=load_weight_set(weights) if weights is not None else None,
        )
        frames: Dict[int, List[Detection]] = {}
        events.log_stage("detect", detector=detector, frames=len(sim.frames))
        for index in range(len(sim.frames)):
            frames[index] = run_detector(sim.rd(index), sim.truth[index], settings)
            log_debug(f"frame {index}: {len(frames[index])} detection(s)")
        events.log_stage("detect", done=True, detections=sum(len(d) for d in frames.values()))
        path = write_detections(frames, out_dir / "detections.csv")
        events.log_artifact(path, "detections")
    log_pass(f"{detector}: {sum(len(d) for d in frames.values())} detection(s) written to {path}")
    return path


# ──────────────────────────────────────────────────────────────────────────────
# train
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class TrainingOutcome:
    weights: WeightSet
    weights_file: Path
    loss_file: Path
    test_pd: float


def cmd_train(config: PathLike, out: PathLike, seed: Optional[int] = None, samples: int = 64,
              epochs: int = 10, batch_size: int = 16, learning_rate: float = 0.01,
              augment_off_epochs: int = 3, conf_threshold: float = 0.5) -> TrainingOutcome:
    """Simulate a desk-scale dataset, train with Adam on 70 % and score Pd on the rest."""
    out_dir = Path(out)
    cfg = _scenario(config, seed)
    with command_run(out_dir, "train", config=str(config), seed=cfg.seed) as events:
        outcome = train_detector(cfg.radar, out_dir, events, seed=cfg.seed, samples=samples, epochs=epochs,
                                 batch_size=batch_size, learning_rate=learning_rate,
                                 augment_off_epochs=augment_off_epochs, conf_threshold=conf_threshold)
    log_pass(f"trained detector written to {outcome.weights_file} (test Pd {outcome.test_pd:.3f})")
    return outcome


def train_detector(radar: RadarParams, out_dir: Path, events: RunLogger, *, seed: int, samples: int,
                   epochs: int, batch_size: int, learning_rate: float, augment_off_epochs: int,
                   conf_threshold: float = 0.5) -> TrainingOutcome:
    if samples < 2:
        raise ConfigError(f"training needs at least 2 samples, got {samples}")
    events.log_stage("dataset", seed=seed, samples=samples)
    dataset = build_dataset(radar, samples, seed=seed)
    train_set, test_set = split_dataset(dataset, 0.7, seed)
    events.log_stage("dataset", done=True, seed=seed, train=len(train_set), test=len(test_set))

    cfg = TrainConfig(learning_rate=learning_rate, epochs=epochs, batch_size=batch_size,
                      augment_off_epochs=min(augment_off_epochs, epochs), seed=seed)
    events.log_stage("train", seed=seed, epochs=epochs)
    result = train(train_set, cfg, run_logger=events)
    events.log_stage("train", done=True, seed=seed, final_loss=result.loss_trace[-1])

    weights_file = write_weights(result.weights, out_dir / "weights.indtw")
    loss_file = write_loss(result.loss_trace, out_dir / "loss.csv")
    loss_plot = plot_loss(loss_file, out_dir / "loss.svg")
    for path, kind in ((weights_file, "weights"), (loss_file, "loss"), (loss_plot, "plot")):
        events.log_artifact(path, kind, seed=seed)

    matched = total = 0
    for tensor, truth in test_set:
        score = pd_pfa(detect(tensor, result.weights, conf_threshold), truth, tensor.shape)
        matched += len(score.matches)
        total += len(truth)
    test_pd = matched / total if total else 1.0
    return TrainingOutcome(result.weights, weights_file, loss_file, test_pd)


# ──────────────────────────────────────────────────────────────────────────────
# track
# ──────────────────────────────────────────────────────────────────────────────
def motion_for(cfg: ScenarioConfig) -> MotionModel:
    return MotionModel.constant_velocity(cfg.radar.delta_t, sigma_r=cfg.measurement.sigma_r,
                                         sigma_v=cfg.measurement.sigma_v)


def measurement_frames(cfg: ScenarioConfig, truth: Sequence[Sequence[TargetState]]) -> List[List[Detection]]:
    return [gen_measurement_frame(cfg, targets, frame) for frame, targets in enumerate(truth)]


def track_ospa(history: Sequence[StepResult], truth: Sequence[Sequence[TargetState]],
               params: OspaParams = OspaParams()) -> List[float]:
    """Per-frame OSPA between confirmed tracks and the true (range, velocity) states."""
    series = []
    for result, targets in zip(history, truth):
        confirmed = [t for t in result.tracks if t.status is TrackStatus.CONFIRMED]
        series.append(ospa(track_points(confirmed), target_points(targets), params))
    return series


def run_tracker(cfg: ScenarioConfig, frames: Sequence[Sequence[Detection]], tracker_cfg: TrackerConfig) -> Tracker:
    tracker = Tracker(motion_for(cfg), tracker_cfg, cfg.radar)
    tracker.run(frames)
    return tracker


def cmd_track(config: PathLike, out: PathLike, detections: Optional[PathLike] = None, seed: Optional[int] = None,
              fixed_r: bool = False, position_only: bool = False, mu: float = 0.3) -> Path:
    """Track detections (CSV) or the scenario's measurement frames; write tracks.csv and per-frame OSPA."""
    out_dir = Path(out)
    cfg = _scenario(config, seed)
    tracker_cfg = TrackerConfig(mu=mu, fixed_r=fixed_r, position_only=position_only)
    with command_run(out_dir, "track", config=str(config), seed=cfg.seed, fixed_r=fixed_r,
                     position_only=position_only) as events:
        truth = trajectory(initial_targets(cfg), cfg.frames, cfg.radar.delta_t)
        if detections is not None:
            by_frame = read_detections(detections, cfg.frames)
            frames = [by_frame.get(i, []) for i in range(cfg.frames)]
        else:
            frames = measurement_frames(cfg, truth)

        events.log_stage("track", seed=cfg.seed, frames=len(frames))
        tracker = run_tracker(cfg, frames, tracker_cfg)
        events.log_stage("track", done=True, seed=cfg.seed, tracks=tracker.state.next_id - 1)

        tracks_file = write_tracks(tracker.history, out_dir / "tracks.csv")
        series = track_ospa(tracker.history, truth)
        metrics_file = write_metrics(((f, None, None, v) for f, v in enumerate(series)), out_dir / "metrics.csv")
        events.log_artifact(tracks_file, "tracks", seed=cfg.seed)
        events.log_artifact(metrics_file, "metrics", seed=cfg.seed)
    log_pass(f"tracked {len(frames)} frame(s); mean OSPA {float(np.mean(series)):.3f}")
    return tracks_file


# ──────────────────────────────────────────────────────────────────────────────
# eval
# ──────────────────────────────────────────────────────────────────────────────
def _truth_sources(input_dir: Optional[PathLike], config: Optional[PathLike], seed: Optional[int]):
    """(frame count, radar, truth bins per frame, true (range, velocity) rows per frame)."""
    if input_dir is not None:
        sim = load_simulation(input_dir)
        phys = {}
        for index, frame in sim.truth.items():
            if frame.entries:
                bins = np.array(frame.entries, dtype=np.float64)
                ranges, velocities = phys_of(bins[:, 0], bins[:, 1], sim.radar)
                phys[index] = np.column_stack([ranges, velocities])
            else:
                phys[index] = np.zeros((0, 2))
        return len(sim.frames), sim.radar, sim.truth, phys
    if config is None:
        raise ConfigError("eval needs a simulation directory or --config")
    cfg = _scenario(config, seed)
    truth = trajectory(initial_targets(cfg), cfg.frames, cfg.radar.delta_t)
    bins = {i: truth_frame(targets, cfg.radar, i) for i, targets in enumerate(truth)}
    phys = {i: target_points(targets) for i, targets in enumerate(truth)}
    return cfg.frames, cfg.radar, bins, phys


def cmd_eval(out: PathLike, input_dir: Optional[PathLike] = None, config: Optional[PathLike] = None,
             detections: Optional[PathLike] = None, tracks: Optional[PathLike] = None, seed: Optional[int] = None,
             tol_bins: Tuple[float, float] = (1.0, 1.0), ospa_params: OspaParams = OspaParams()) -> Path:
    """Score detections (Pd/Pfa) and/or confirmed tracks (OSPA) against truth into metrics.csv."""
    if detections is None and tracks is None:
        raise ConfigError("eval needs --detections and/or --tracks")
    out_dir = Path(out)
    with command_run(out_dir, "eval", input=str(input_dir), config=str(config)) as events:
        count, radar, truth_bins, truth_phys = _truth_sources(input_dir, config, seed)
        grid = (radar.M, radar.L)
        dets = read_detections(detections, count) if detections is not None else None
        track_table: Dict[int, List[Tuple[float, float]]] = {i: [] for i in range(count)}
        if tracks is not None:
            for row in read_tracks(tracks):
                if row.status == TrackStatus.CONFIRMED.value:
                    track_table.setdefault(row.frame, []).append((row.range, row.velocity))

        rows = []
        for frame in range(count):
            pd = pfa = value = None
            if dets is not None:
                score = pd_pfa(dets.get(frame, []), truth_bins.get(frame, GroundTruthFrame([], frame)), grid,
                               tol_bins)
                pd, pfa = score.pd, score.pfa
            if tracks is not None:
                value = ospa(np.array(track_table.get(frame, [])).reshape(-1, 2),
                             truth_phys.get(frame, np.zeros((0, 2))), ospa_params)
            rows.append((frame, pd, pfa, value))
        path = write_metrics(rows, out_dir / "metrics.csv")
        events.log_artifact(path, "metrics")
    log_pass(f"metrics for {count} frame(s) written to {path}")
    return path


# ──────────────────────────────────────────────────────────────────────────────
# e2e
# ──────────────────────────────────────────────────────────────────────────────
@dataclass
class SeedOutcome:
    seed: int
    sweep_rows: List[Tuple[Any, ...]]
    ospa_rows: List[Tuple[Any, ...]]


def _detector_settings(manifest: RunManifest, weights: Optional[WeightSet]) -> List[Tuple[float | None, DetectorSettings]]:
    settings: List[Tuple[float | None, DetectorSettings]] = []
    for name in manifest.detectors:
        if name == "cfar":
            cfar = CfarConfig()
            settings.append((cfar.pfa_design, DetectorSettings("cfar", cfar=cfar)))
        elif name == "montecarlo":
            settings.extend((pfa, DetectorSettings("montecarlo", pfa=pfa)) for pfa in manifest.pfa)
        else:
            settings.append((None, DetectorSettings("neural", conf_threshold=manifest.conf_threshold,
                                                    weights=weights)))
    return settings


def detection_sweep(det_cfg: ScenarioConfig, manifest: RunManifest, settings, seed: int) -> List[Tuple[Any, ...]]:
    """Pooled Pd / Pfa per detector setting and post-integration SNR for one seed."""
    radar = det_cfg.radar
    truth_traj = trajectory(initial_targets(det_cfg), manifest.detection_frames, radar.delta_t)
    truths = [truth_frame(targets, radar, f) for f, targets in enumerate(truth_traj)]
    grid = (radar.M, radar.L)
    rows = []
    for snr in manifest.snr_db:
        cfg = det_cfg.with_snr(pre_snr_for_post(snr, radar))
        maps = [range_doppler(synth_echo(cfg, f, targets)) for f, targets in enumerate(truth_traj)]
        for pfa_design, setting in settings:
            matched = n_truth = false_alarms = 0
            for rd, truth in zip(maps, truths):
                score = pd_pfa(run_detector(rd, truth, setting), truth, grid)
                matched += len(score.matches)
                n_truth += len(truth)
                false_alarms += score.false_alarms
            pd = matched / n_truth if n_truth else 1.0
            pfa = false_alarms / (len(maps) * grid[0] * grid[1])
            rows.append((seed, setting.detector, pfa_design, float(snr), pd, pfa))
    return rows


def tracking_comparison(track_cfg: ScenarioConfig, manifest: RunManifest, seed: int,
                        out_dir: Path) -> List[Tuple[Any, ...]]:
    truth = trajectory(initial_targets(track_cfg), track_cfg.frames, track_cfg.radar.delta_t)
    frames = measurement_frames(track_cfg, truth)
    full = run_tracker(track_cfg, frames, TrackerConfig(mu=manifest.mu, gate=manifest.gate))
    ablated = run_tracker(track_cfg, frames, TrackerConfig(mu=manifest.mu, gate=manifest.gate,
                                                           fixed_r=manifest.fixed_r,
                                                           position_only=manifest.position_only))
    write_tracks(full.history, out_dir / "tracks_full.csv")
    write_tracks(ablated.history, out_dir / "tracks_ablated.csv")
    full_series = track_ospa(full.history, truth)
    ablated_series = track_ospa(ablated.history, truth)
    return [(seed, f, a, b) for f, (a, b) in enumerate(zip(full_series, ablated_series))]


def _run_seed(seed: int, manifest: RunManifest, track_base: ScenarioConfig, det_base: ScenarioConfig,
              weights: Optional[WeightSet]) -> SeedOutcome:
    seed_dir = manifest.output / f"seed_{seed}"
    with log_context(seed=seed), command_run(seed_dir, "e2e.seed", seed=seed) as events:
        sweep_rows: List[Tuple[Any, ...]] = []
        settings = _detector_settings(manifest, weights)
        if settings and manifest.snr_db:
            events.log_stage("detection_sweep", seed=seed)
            sweep_rows = detection_sweep(det_base.with_seed(seed), manifest, settings, seed)
            path = write_detection_sweep(sweep_rows, seed_dir / "detection_sweep.csv")
            events.log_stage("detection_sweep", done=True, seed=seed)
            events.log_artifact(path, "detection_sweep", seed=seed)

        events.log_stage("tracking", seed=seed)
        ospa_rows = tracking_comparison(track_base.with_seed(seed), manifest, seed, seed_dir)
        path = write_tracking_ospa(ospa_rows, seed_dir / "tracking_ospa.csv")
        events.log_stage("tracking", done=True, seed=seed)
        events.log_artifact(path, "tracking_ospa", seed=seed)
    log_info(f"seed {seed}: done")
    return SeedOutcome(seed, sweep_rows, ospa_rows)


def _manifest_summary(manifest: RunManifest) -> Dict[str, Any]:
    return {
        "scenario": manifest.scenario.name,
        "detection_scenario": manifest.detection_scenario.name if manifest.detection_scenario else None,
        "seeds": [str(s) for s in manifest.seeds],
        "detectors": list(manifest.detectors),
        "fixed_r": manifest.fixed_r,
        "position_only": manifest.position_only,
    }


def cmd_e2e(manifest_path: PathLike, out: Optional[PathLike] = None, workers: Optional[int] = None) -> Path:
    """Detection sweep and tracking comparison for every seed, aggregated into CSVs, SVG plots and report.md."""
    manifest = load_manifest(manifest_path, output=out)
    out_dir = manifest.output
    track_base = load_scenario(manifest.scenario)
    det_base = load_scenario(manifest.detection_scenario or manifest.scenario)

    with command_run(out_dir, "e2e", manifest=str(manifest_path), seeds=list(manifest.seeds)) as events:
        weights: Optional[WeightSet] = None
        if "neural" in manifest.detectors:
            if manifest.weights is not None:
                weights = load_weight_set(manifest.weights)
            else:
                log_section("Training the neural detector")
                t = manifest.training
                weights = train_detector(det_base.radar, out_dir, events, seed=manifest.seeds[0],
                                         samples=t.samples, epochs=t.epochs, batch_size=t.batch_size,
                                         learning_rate=t.learning_rate,
                                         augment_off_epochs=t.augment_off_epochs,
                                         conf_threshold=manifest.conf_threshold).weights

        threads = worker_count(workers or manifest.workers, len(manifest.seeds))
        log_info(f"running {len(manifest.seeds)} seed(s) on {threads} thread(s)")
        outcomes: Dict[int, SeedOutcome] = {}
        failure: Optional[BaseException] = None
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_run_seed, seed, manifest, track_base, det_base, weights): seed
                       for seed in manifest.seeds}
            for future in as_completed(futures):
                seed = futures[future]
                try:
                    outcomes[seed] = future.result()
                except Exception as exc:
                    log_fail(f"seed {seed} failed: {exc}")
                    failure = failure or exc
        if failure is not None:
            raise failure

        ordered = [outcomes[s] for s in manifest.seeds]
        sweep_rows = [row for o in ordered for row in o.sweep_rows]
        ospa_rows = [row for o in ordered for row in o.ospa_rows]
        plots: Dict[str, Path] = {}
        sweep_csv = None
        if sweep_rows:
            sweep_csv = write_detection_sweep(sweep_rows, out_dir / "detection_sweep.csv")
            plots["detection_sweep"] = plot_detection_sweep(sweep_csv, out_dir / "pd_vs_snr.svg")
            events.log_artifact(sweep_csv, "detection_sweep")
        ospa_csv = write_tracking_ospa(ospa_rows, out_dir / "tracking_ospa.csv")
        plots["tracking_ospa"] = plot_tracking_ospa(ospa_csv, out_dir / "ospa_vs_frame.svg")
        events.log_artifact(ospa_csv, "tracking_ospa")
        for path in plots.values():
            events.log_artifact(path, "plot")
        report = generate_report(out_dir, _manifest_summary(manifest), sweep_csv, ospa_csv, plots)
        events.log_artifact(report, "report")
    log_pass(f"e2e report written to {report}")
    return report
