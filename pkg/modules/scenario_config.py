# modules/scenario_config.py
"""Scenario text files (``[section]`` / ``key = value``) and YAML run manifests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from modules.signal_sim import MeasurementModel, RadarParams, ScenarioConfig, TargetState
from rdlib.validator import validate_manifest, validate_scenario
from rdtrack.exceptions import ConfigError, MissingDependencyError
from utils.logger import log_debug
from utils.paths import default_output_root

try:
    import yaml
except ModuleNotFoundError as exc:  # pragma: no cover - runtime guard
    yaml = None  # type: ignore[assignment]
    _YAML_IMPORT_ERROR: Optional[BaseException] = exc
else:
    _YAML_IMPORT_ERROR = None

PathLike = Union[str, Path]
REQUIRED_SECTIONS = ("radar", "run")


# ──────────────────────────────────────────────────────────────────────────────
# Преобразование значений
# ──────────────────────────────────────────────────────────────────────────────
def _number(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"'{text}' is not a finite number")
    return value


def _integer(text: str) -> int:
    return int(text.strip())


def _numbers(text: str) -> List[float]:
    return [_number(part) for part in text.split(",")]


def _pair(text: str) -> List[float]:
    values = _numbers(text)
    if len(values) != 2:
        raise ValueError(f"expected two comma-separated numbers, got '{text}'")
    return values


def _target(text: str) -> List[float]:
    values = _numbers(text)
    if len(values) not in (2, 3):
        raise ValueError(f"expected 'range,velocity[,amplitude]', got '{text}'")
    TargetState(*values)
    return values


def _int_pair(text: str) -> List[int]:
    values = [_integer(part) for part in text.split(",")]
    if len(values) != 2:
        raise ValueError(f"expected two comma-separated integers, got '{text}'")
    return values


def _optional_number(text: str) -> Optional[float]:
    return None if text.strip().lower() == "none" else _number(text)


KEYS: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "radar": {
        "f0": _number, "B": _number, "L": _integer, "M": _integer,
        "fs": _number, "delta_t": _number, "T": _number,
    },
    "targets": {"target": _target, "random": _int_pair},
    "clutter": {
        "rate": _number,
        "range_min": _number, "range_max": _number,
        "velocity_min": _number, "velocity_max": _number,
        "sigma_r": _number, "sigma_v": _number,
        "target_confidence": _pair, "clutter_confidence": _pair,
        "feature_noise": _number,
    },
    "run": {"snr_db": _optional_number, "frames": _integer, "seed": _integer},
}
REPEATED_KEYS = {("targets", "target")}


# ──────────────────────────────────────────────────────────────────────────────
# Разбор сценария
# ──────────────────────────────────────────────────────────────────────────────
def parse_scenario_text(text: str, path: Optional[PathLike] = None) -> Dict[str, Dict[str, Any]]:
    """Parse scenario text into ``{section: {key: value}}`` with typed values.

    Comments start with ``#`` or ``;``. Repeated ``target`` keys accumulate
    into a list; every other repeated key or section is an error.
    """
    mapping: Dict[str, Dict[str, Any]] = {}
    section: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue

        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header '{raw.strip()}'", path=path, line=lineno)
            section = line[1:-1].strip()
            if section not in KEYS:
                raise ConfigError(f"unknown section [{section}]", path=path, line=lineno, section=section)
            if section in mapping:
                raise ConfigError(f"section [{section}] appears twice", path=path, line=lineno, section=section)
            mapping[section] = {}
            continue

        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", path=path, line=lineno, section=section)
        if section is None:
            raise ConfigError("key outside of any section", path=path, line=lineno)

        key, _, value = (part.strip() for part in line.partition("="))
        coerce = KEYS[section].get(key)
        if coerce is None:
            raise ConfigError(f"unknown key '{key}' in [{section}]", path=path, line=lineno, section=section)
        try:
            parsed = coerce(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for '{key}': {exc}", path=path, line=lineno, section=section) from exc

        if (section, key) in REPEATED_KEYS:
            mapping[section].setdefault(key, []).append(parsed)
        elif key in mapping[section]:
            raise ConfigError(f"key '{key}' repeated in [{section}]", path=path, line=lineno, section=section)
        else:
            mapping[section][key] = parsed

    for required in REQUIRED_SECTIONS:
        if required not in mapping:
            raise ConfigError(f"missing required section [{required}]", path=path, section=required)
    return mapping


def scenario_from_mapping(mapping: Dict[str, Dict[str, Any]], path: Optional[PathLike] = None) -> ScenarioConfig:
    ok, errors = validate_scenario(mapping)
    if not ok:
        raise ConfigError("scenario failed validation: " + "; ".join(errors), path=path)

    radar = RadarParams(**mapping["radar"])
    targets_section = mapping.get("targets", {})
    targets = tuple(TargetState(*values) for values in targets_section.get("target", []))
    random_band = targets_section.get("random")

    clutter = mapping.get("clutter", {})
    defaults = MeasurementModel()
    measurement = MeasurementModel(
        sigma_r=clutter.get("sigma_r", defaults.sigma_r),
        sigma_v=clutter.get("sigma_v", defaults.sigma_v),
        target_confidence=tuple(clutter.get("target_confidence", defaults.target_confidence)),
        clutter_confidence=tuple(clutter.get("clutter_confidence", defaults.clutter_confidence)),
        feature_noise=clutter.get("feature_noise", defaults.feature_noise),
    )
    region = (
        (clutter.get("range_min", 0.0), clutter.get("range_max", 0.0)),
        (clutter.get("velocity_min", 0.0), clutter.get("velocity_max", 0.0)),
    )
    run = mapping["run"]
    return ScenarioConfig(
        radar=radar,
        targets=targets,
        snr_db=run.get("snr_db"),
        frames=run["frames"],
        clutter_rate=clutter.get("rate", 0.0),
        clutter_region=region,
        seed=run.get("seed", 0),
        measurement=measurement,
        random_targets=tuple(random_band) if random_band is not None else None,
    )


def parse_scenario(text: str, path: Optional[PathLike] = None) -> ScenarioConfig:
    return scenario_from_mapping(parse_scenario_text(text, path), path)


def load_scenario(path: PathLike) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("scenario file not found", path=p)
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"scenario file is not UTF-8 ({exc.reason})", path=p) from exc
    cfg = parse_scenario(text, p)
    log_debug(f"scenario {p}: {cfg.radar.M}x{cfg.radar.L}, {cfg.frames} frame(s), seed {cfg.seed}")
    return cfg


# ──────────────────────────────────────────────────────────────────────────────
# Запись сценария
# ──────────────────────────────────────────────────────────────────────────────
def _fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def scenario_to_mapping(cfg: ScenarioConfig) -> Dict[str, Dict[str, Any]]:
    radar = cfg.radar
    (r_lo, r_hi), (v_lo, v_hi) = cfg.clutter_region
    m = cfg.measurement
    targets: Dict[str, Any] = {}
    if cfg.targets:
        targets["target"] = [[t.range, t.velocity, t.amplitude] for t in cfg.targets]
    if cfg.random_targets is not None:
        targets["random"] = list(cfg.random_targets)
    mapping: Dict[str, Dict[str, Any]] = {
        "radar": {"f0": radar.f0, "B": radar.B, "L": radar.L, "M": radar.M, "fs": radar.fs,
                  "delta_t": radar.delta_t, "T": radar.T},
        "clutter": {
            "rate": cfg.clutter_rate,
            "range_min": r_lo, "range_max": r_hi, "velocity_min": v_lo, "velocity_max": v_hi,
            "sigma_r": m.sigma_r, "sigma_v": m.sigma_v,
            "target_confidence": list(m.target_confidence),
            "clutter_confidence": list(m.clutter_confidence),
            "feature_noise": m.feature_noise,
        },
        "run": {"snr_db": cfg.snr_db, "frames": cfg.frames, "seed": cfg.seed},
    }
    if targets:
        mapping["targets"] = targets
    return mapping


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Scenario text that :func:`parse_scenario` reads back to an equal config."""
    lines: List[str] = []
    mapping = scenario_to_mapping(cfg)
    for section in ("radar", "targets", "clutter", "run"):
        if section not in mapping:
            continue
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, value in mapping[section].items():
            if (section, key) in REPEATED_KEYS:
                lines.extend(f"{key} = {_fmt(item)}" for item in value)
            else:
                lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def write_scenario(cfg: ScenarioConfig, path: PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dump_scenario(cfg), encoding="utf-8")
    return p


# ──────────────────────────────────────────────────────────────────────────────
# Манифест e2e
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class TrainSettings:
    samples: int = 64
    epochs: int = 10
    batch_size: int = 16
    learning_rate: float = 0.01
    augment_off_epochs: int = 3


@dataclass(frozen=True)
class RunManifest:
    """Everything ``rdtrack e2e`` needs; paths are resolved against the manifest directory."""

    scenario: Path
    seeds: Tuple[int, ...]
    output: Path
    detection_scenario: Optional[Path] = None
    detectors: Tuple[str, ...] = ("cfar", "montecarlo")
    fixed_r: bool = True
    position_only: bool = True
    mu: float = 0.3
    gate: float = 9.2103
    snr_db: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    pfa: Tuple[float, ...] = (1e-5, 5e-5)
    detection_frames: int = 4
    conf_threshold: float = 0.5
    weights: Optional[Path] = None
    training: TrainSettings = field(default_factory=TrainSettings)
    workers: int = 0


def _resolve(base: Path, value: Optional[str], name: str, source: Path) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ConfigError(f"'{name}' points to a missing file: {p}", path=source)
    return p


def load_manifest(path: PathLike, output: Optional[PathLike] = None) -> RunManifest:
    """Read and validate a YAML run manifest; ``output`` overrides the manifest's own."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("manifest not found", path=p)
    if yaml is None:
        raise MissingDependencyError(
            package="PyYAML",
            import_name="yaml",
            instructions="pip install -r requirements.txt",
            original=_YAML_IMPORT_ERROR,
        )
    try:
        with p.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"manifest is not valid YAML: {exc}", path=p, line=line) from exc
    if not isinstance(data, dict):
        raise ConfigError("manifest must be a mapping", path=p)

    ok, errors = validate_manifest(data)
    if not ok:
        raise ConfigError("manifest failed validation: " + "; ".join(errors), path=p)

    base = p.parent
    tracker = data.get("tracker", {})
    if output is not None:
        out = Path(output)
    elif "output" in data:
        out = base / data["output"]
    else:
        out = default_output_root() / "e2e"
    return RunManifest(
        scenario=_resolve(base, data["scenario"], "scenario", p),  # type: ignore[arg-type]
        seeds=tuple(int(s) for s in data["seeds"]),
        output=out,
        detection_scenario=_resolve(base, data.get("detection_scenario"), "detection_scenario", p),
        detectors=tuple(data.get("detectors", RunManifest.detectors)),
        fixed_r=bool(tracker.get("fixed_r", True)),
        position_only=bool(tracker.get("position_only", True)),
        mu=float(tracker.get("mu", 0.3)),
        gate=float(tracker.get("gate", 9.2103)),
        snr_db=tuple(float(v) for v in data.get("snr_db", RunManifest.snr_db)),
        pfa=tuple(float(v) for v in data.get("pfa", RunManifest.pfa)),
        detection_frames=int(data.get("detection_frames", 4)),
        conf_threshold=float(data.get("conf_threshold", 0.5)),
        weights=_resolve(base, data.get("weights"), "weights", p),
        training=TrainSettings(**data.get("training", {})),
        workers=int(data.get("workers", 0)),
    )
