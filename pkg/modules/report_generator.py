# modules/report_generator.py
"""CSV artifacts, SVG plots rendered from those CSVs and the Markdown run report."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from jinja2 import Environment, FileSystemLoader, StrictUndefined  # noqa: E402

from modules.classic_detect import Detection  # noqa: E402
from modules.eval_metrics import summarize  # noqa: E402
from modules.tracker import StepResult  # noqa: E402
from rdtrack.exceptions import DataError  # noqa: E402

PathLike = Union[str, Path]

DETECTION_HEADER = ("frame", "range_bin", "doppler_bin", "confidence", "energy")
TRACK_HEADER = ("frame", "track_id", "status", "range", "velocity", "p00", "p01", "p11")
METRIC_HEADER = ("frame", "pd", "pfa", "ospa")
LOSS_HEADER = ("epoch", "loss")
SWEEP_HEADER = ("seed", "detector", "pfa_design", "snr_db", "pd", "pfa")
OSPA_HEADER = ("seed", "frame", "ospa_full", "ospa_ablated")

TEMPLATE_DIR = Path(__file__).parent / "templates"
SVG_HASH_SALT = "rdtrack"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    try:
        return repr(float(value))
    except (TypeError, ValueError):
        return str(value)


def write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with a fixed header; floats are written with ``repr`` so they read back exactly."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return target


def read_rows(path: PathLike, header: Sequence[str]) -> List[Dict[str, str]]:
    source = Path(path)
    if not source.is_file():
        raise DataError(f"CSV file not found: {source}")
    with source.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        found = next(reader, None)
        if found is None or tuple(h.strip() for h in found) != tuple(header):
            raise DataError(f"{source}: expected header {','.join(header)}, got {found}")
        rows = []
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{source}:{number}: expected {len(header)} fields, got {len(row)}")
            rows.append(dict(zip(header, row)))
    return rows


def _parse(source: PathLike, number: int, convert, value: str):
    try:
        return convert(value)
    except ValueError as exc:
        raise DataError(f"{source}:{number}: bad value {value!r}") from exc


# ──────────────────────────────────────────────────────────────────────────────
# Обнаружения
# ──────────────────────────────────────────────────────────────────────────────
def write_detections(frames: Mapping[int, Sequence[Detection]], path: PathLike) -> Path:
    rows = (
        (frame, d.range_bin, d.doppler_bin, d.confidence, d.energy)
        for frame in sorted(frames)
        for d in frames[frame]
    )
    return write_rows(path, DETECTION_HEADER, rows)


def read_detections(path: PathLike, frames: int | None = None) -> Dict[int, List[Detection]]:
    """Detections per frame; with ``frames`` every index below it is present."""
    result: Dict[int, List[Detection]] = {i: [] for i in range(frames or 0)}
    for number, row in enumerate(read_rows(path, DETECTION_HEADER), start=2):
        frame = _parse(path, number, int, row["frame"])
        values = [_parse(path, number, float, row[k]) for k in DETECTION_HEADER[1:]]
        result.setdefault(frame, []).append(Detection(*values))
    return result


# ──────────────────────────────────────────────────────────────────────────────
# Треки
# ──────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class TrackRow:
    frame: int
    track_id: int
    status: str
    range: float
    velocity: float
    p00: float
    p01: float
    p11: float


def track_rows(history: Iterable[StepResult]) -> List[TrackRow]:
    rows = []
    for result in history:
        for t in result.tracks:
            P = t.covariance
            rows.append(TrackRow(result.frame, t.id, t.status.value, float(t.state[0]), float(t.state[1]),
                                 float(P[0, 0]), float(P[0, 1]), float(P[1, 1])))
    return rows


def write_tracks(history: Iterable[StepResult], path: PathLike) -> Path:
    rows = (
        (r.frame, r.track_id, r.status, r.range, r.velocity, r.p00, r.p01, r.p11)
        for r in track_rows(history)
    )
    return write_rows(path, TRACK_HEADER, rows)


def read_tracks(path: PathLike) -> List[TrackRow]:
    rows = []
    for number, row in enumerate(read_rows(path, TRACK_HEADER), start=2):
        rows.append(TrackRow(
            frame=_parse(path, number, int, row["frame"]),
            track_id=_parse(path, number, int, row["track_id"]),
            status=row["status"],
            **{k: _parse(path, number, float, row[k]) for k in TRACK_HEADER[3:]},
        ))
    return rows


# ──────────────────────────────────────────────────────────────────────────────
# Метрики и кривые
# ──────────────────────────────────────────────────────────────────────────────
def write_metrics(rows: Iterable[Tuple[int, float | None, float | None, float | None]], path: PathLike) -> Path:
    """``frame,pd,pfa,ospa``; a metric that was not computed is left empty."""
    return write_rows(path, METRIC_HEADER, rows)


def write_loss(trace: Sequence[float], path: PathLike) -> Path:
    return write_rows(path, LOSS_HEADER, ((epoch, float(loss)) for epoch, loss in enumerate(trace, start=1)))


def write_detection_sweep(rows: Iterable[Sequence[Any]], path: PathLike) -> Path:
    return write_rows(path, SWEEP_HEADER, rows)


def write_tracking_ospa(rows: Iterable[Sequence[Any]], path: PathLike) -> Path:
    return write_rows(path, OSPA_HEADER, rows)


def _floats(rows: List[Dict[str, str]], key: str, source: PathLike) -> List[float]:
    return [_parse(source, i, float, row[key]) for i, row in enumerate(rows, start=2)]


# ──────────────────────────────────────────────────────────────────────────────
# Графики (только из CSV)
# ──────────────────────────────────────────────────────────────────────────────
def _save_svg(fig, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig.savefig(target, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return target


def _detector_label(detector: str, pfa_design: str) -> str:
    if detector == "neural":
        return "neural"
    return f"{detector} (Pfa {float(pfa_design):g})"


def plot_detection_sweep(csv_path: PathLike, svg_path: PathLike) -> Path:
    """Mean Pd over seeds against post-integration SNR, one line per detector setting."""
    rows = read_rows(csv_path, SWEEP_HEADER)
    curves: Dict[str, Dict[float, List[float]]] = defaultdict(lambda: defaultdict(list))
    for number, row in enumerate(rows, start=2):
        label = _detector_label(row["detector"], row["pfa_design"])
        curves[label][_parse(csv_path, number, float, row["snr_db"])].append(
            _parse(csv_path, number, float, row["pd"]))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label in sorted(curves):
        snrs = sorted(curves[label])
        ax.plot(snrs, [summarize(curves[label][s]).mean for s in snrs], marker="o", label=label)
    ax.set_xlabel("SNR after integration (dB)")
    ax.set_ylabel("Pd")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(loc="lower right")
    return _save_svg(fig, svg_path)


def plot_tracking_ospa(csv_path: PathLike, svg_path: PathLike) -> Path:
    """Mean OSPA over seeds per frame for the full and the ablated tracker."""
    rows = read_rows(csv_path, OSPA_HEADER)
    per_frame: Dict[int, Dict[str, List[float]]] = defaultdict(lambda: {"ospa_full": [], "ospa_ablated": []})
    for number, row in enumerate(rows, start=2):
        frame = _parse(csv_path, number, int, row["frame"])
        for key in ("ospa_full", "ospa_ablated"):
            per_frame[frame][key].append(_parse(csv_path, number, float, row[key]))

    frames = sorted(per_frame)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for key, label in (("ospa_full", "confidence + features"), ("ospa_ablated", "ablated")):
        ax.plot(frames, [summarize(per_frame[f][key]).mean for f in frames], label=label)
    ax.set_xlabel("frame")
    ax.set_ylabel("OSPA (c=5, p=1)")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    return _save_svg(fig, svg_path)


def plot_loss(csv_path: PathLike, svg_path: PathLike) -> Path:
    rows = read_rows(csv_path, LOSS_HEADER)
    epochs = [int(float(v)) for v in _floats(rows, "epoch", csv_path)]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(epochs, _floats(rows, "loss", csv_path), marker=".")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss per sample")
    ax.grid(True, alpha=0.3)
    return _save_svg(fig, svg_path)


# ──────────────────────────────────────────────────────────────────────────────
# Отчёт
# ──────────────────────────────────────────────────────────────────────────────
def _sweep_table(csv_path: PathLike) -> List[Dict[str, Any]]:
    grouped: Dict[Tuple[str, float], Dict[str, List[float]]] = defaultdict(lambda: {"pd": [], "pfa": []})
    for number, row in enumerate(read_rows(csv_path, SWEEP_HEADER), start=2):
        key = (_detector_label(row["detector"], row["pfa_design"]), _parse(csv_path, number, float, row["snr_db"]))
        grouped[key]["pd"].append(float(row["pd"]))
        grouped[key]["pfa"].append(float(row["pfa"]))
    return [
        {"detector": label, "snr_db": snr, "pd": summarize(v["pd"]).mean, "pfa": summarize(v["pfa"]).mean}
        for (label, snr), v in sorted(grouped.items())
    ]


def _ospa_table(csv_path: PathLike) -> List[Dict[str, Any]]:
    rows = read_rows(csv_path, OSPA_HEADER)
    table = []
    for key, label in (("ospa_full", "confidence + features"), ("ospa_ablated", "ablated")):
        stats = summarize(_floats(rows, key, csv_path))
        table.append({"variant": label, **stats.as_row()})
    return table


def generate_report(
    output_dir: PathLike,
    manifest: Mapping[str, Any],
    sweep_csv: PathLike | None = None,
    ospa_csv: PathLike | None = None,
    plots: Mapping[str, PathLike] | None = None,
    template_name: str = "report_template.md.j2",
) -> Path:
    """Render ``report.md`` from the aggregate CSVs."""
    env = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), autoescape=False, undefined=StrictUndefined,
                      keep_trailing_newline=True, trim_blocks=True, lstrip_blocks=True)
    template = env.get_template(template_name)
    out = Path(output_dir)
    rendered = template.render(
        manifest=manifest,
        sweep=_sweep_table(sweep_csv) if sweep_csv else [],
        ospa=_ospa_table(ospa_csv) if ospa_csv else [],
        plots={name: Path(p).relative_to(out).as_posix() for name, p in (plots or {}).items()},
    )
    target = out / "report.md"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(rendered, encoding="utf-8")
    return target
