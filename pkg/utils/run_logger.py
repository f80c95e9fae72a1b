"""Structured run-event logging for rdtrack commands."""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional


class RunEventType(Enum):
    """Types of run events."""
    RUN_START = "run.start"
    RUN_COMPLETE = "run.complete"
    RUN_FAILED = "run.failed"

    STAGE_START = "stage.start"
    STAGE_COMPLETE = "stage.complete"

    ARTIFACT_WRITE = "artifact.write"
    TRAIN_EPOCH = "train.epoch"


class RunSeverity(Enum):
    """Severity levels for run events."""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


@dataclass
class RunEvent:
    """Run event."""
    timestamp: str
    event_type: str
    severity: str
    command: str
    stage: Optional[str]
    result: str  # success, failure, error
    details: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return asdict(self)

    def to_json(self) -> str:
        """Convert to JSON string."""
        return json.dumps(self.to_dict(), default=_json_default, sort_keys=True)


def _json_default(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "item"):
        return value.item()
    return str(value)


class RunLogger:
    """
    JSON-lines logger for experiment runs.

    Each command owns one logger writing ``events.jsonl`` in its output
    directory. Loggers are keyed by file so concurrent seeds never share a
    handler.
    """

    def __init__(self, log_file: Optional[Path] = None, command: str = "rdtrack", log_level: str = "INFO"):
        self.log_file = Path(log_file) if log_file else None
        self.command = command
        self.log_level = getattr(logging, log_level.upper())

        name = "rdtrack.run" if self.log_file is None else f"rdtrack.run.{self.log_file.resolve()}"
        self.logger = logging.getLogger(name)
        self.logger.setLevel(self.log_level)
        self.logger.propagate = False

        if self.log_file and not self.logger.handlers:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(self.log_file, encoding="utf-8")
            file_handler.setLevel(self.log_level)
            file_handler.setFormatter(logging.Formatter("%(message)s"))
            self.logger.addHandler(file_handler)

    def log_event(
        self,
        event_type: RunEventType,
        result: str = "success",
        stage: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
        severity: RunSeverity = RunSeverity.INFO,
        seed: Optional[int] = None,
    ) -> RunEvent:
        event = RunEvent(
            timestamp=datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            event_type=event_type.value,
            severity=severity.value,
            command=self.command,
            stage=stage,
            result=result,
            details=details or {},
            seed=seed,
        )
        self.logger.info(event.to_json())
        return event

    def log_run_start(self, **details: Any) -> RunEvent:
        return self.log_event(RunEventType.RUN_START, details=details)

    def log_run_complete(self, duration: float, **details: Any) -> RunEvent:
        details["duration_seconds"] = round(duration, 6)
        return self.log_event(RunEventType.RUN_COMPLETE, details=details)

    def log_run_failed(self, error: BaseException, **details: Any) -> RunEvent:
        details["error"] = str(error)
        details["error_type"] = type(error).__name__
        return self.log_event(RunEventType.RUN_FAILED, result="error", details=details, severity=RunSeverity.ERROR)

    def log_stage(self, stage: str, *, done: bool = False, seed: Optional[int] = None, **details: Any) -> RunEvent:
        event_type = RunEventType.STAGE_COMPLETE if done else RunEventType.STAGE_START
        return self.log_event(event_type, stage=stage, details=details, seed=seed)

    def log_artifact(self, path: Path, kind: str, seed: Optional[int] = None) -> RunEvent:
        return self.log_event(RunEventType.ARTIFACT_WRITE, details={"path": str(path), "kind": kind}, seed=seed)

    def log_epoch(self, epoch: int, loss: float, augmented: bool) -> RunEvent:
        return self.log_event(
            RunEventType.TRAIN_EPOCH,
            stage="train",
            details={"epoch": epoch, "loss": loss, "augmented": augmented},
            severity=RunSeverity.DEBUG,
        )

    def close(self) -> None:
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)


_null_logger: Optional[RunLogger] = None


def null_run_logger() -> RunLogger:
    """Logger without handlers, for library calls made outside a command."""
    global _null_logger
    if _null_logger is None:
        _null_logger = RunLogger(None, command="library")
    return _null_logger
