"""Custom exceptions used across the rdtrack workbench."""

from __future__ import annotations

from pathlib import Path
from typing import Optional


class MissingDependencyError(RuntimeError):
    """Raised when an optional runtime dependency is not installed."""

    exit_code = 1

    def __init__(
        self,
        *,
        package: str,
        import_name: Optional[str] = None,
        instructions: Optional[str] = None,
        original: Optional[BaseException] = None,
    ) -> None:
        self.package = package
        self.import_name = import_name or package
        self.instructions = instructions
        self.original = original

        dependency_label = self.package
        if self.import_name and self.import_name != self.package:
            dependency_label += f" (модуль '{self.import_name}')"

        message = f"Отсутствует обязательная зависимость {dependency_label}."
        if self.instructions:
            message += f" Установите её и повторите попытку: {self.instructions}."
        else:
            message += " Установите требуемый пакет и повторите попытку."

        super().__init__(message)


class WorkbenchError(Exception):
    """Base class for every error the CLI maps to a non-zero exit code."""

    exit_code = 2


# ──────────────────────────────────────────────────────────────────────────────
# Ошибки конфигурации (код возврата 1)
# ──────────────────────────────────────────────────────────────────────────────
class ConfigError(WorkbenchError):
    """Invalid scenario file, manifest or command-line combination."""

    exit_code = 1

    def __init__(
        self,
        message: str,
        *,
        path: str | Path | None = None,
        line: Optional[int] = None,
        section: Optional[str] = None,
    ) -> None:
        self.path = str(path) if path is not None else None
        self.line = line
        self.section = section
        self.reason = message

        location = ""
        if self.path:
            location = self.path
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(location + message)


# ──────────────────────────────────────────────────────────────────────────────
# Ошибки данных (код возврата 2)
# ──────────────────────────────────────────────────────────────────────────────
class DataError(WorkbenchError):
    """Input data is missing, malformed or inconsistent."""

    exit_code = 2


class RdmFormatError(DataError):
    """An RDM file cannot be parsed."""


class BadMagicError(RdmFormatError):
    """The file does not start with the RDM magic."""


class TruncatedFileError(RdmFormatError):
    """The file is shorter than its header declares."""


class DimensionOverflowError(RdmFormatError):
    """The header declares dimensions that cannot be held."""


class WeightFileError(DataError):
    """A weight file cannot be parsed or does not match the architecture."""


class ShapeError(DataError):
    """Array dimensions do not match what an operation requires."""


class OutOfRangeError(DataError, ValueError):
    """A physical quantity lies outside the unambiguous radar extent."""


class InsufficientClutterError(DataError):
    """Too few clutter cells to place a Monte Carlo threshold."""


# ──────────────────────────────────────────────────────────────────────────────
# Численные ошибки (код возврата 3)
# ──────────────────────────────────────────────────────────────────────────────
class NumericError(WorkbenchError):
    """A numeric computation failed or produced non-finite values."""

    exit_code = 3


class DomainError(NumericError, ValueError):
    """A function was called outside its mathematical domain."""


class SingularMatrixError(NumericError):
    """A covariance that must be inverted is singular."""


class StaleCacheError(NumericError):
    """A forward cache no longer matches the weights it was produced with."""


class NonFiniteLossError(NumericError):
    """Training produced a NaN or infinite loss."""
