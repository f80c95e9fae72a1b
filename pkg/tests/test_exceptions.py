"""Tests for custom exceptions."""
import pytest

from rdtrack.exceptions import (
    BadMagicError,
    ConfigError,
    DataError,
    DomainError,
    MissingDependencyError,
    NumericError,
    OutOfRangeError,
    RdmFormatError,
    SingularMatrixError,
    StaleCacheError,
    WorkbenchError,
)


def test_missing_dependency_error_basic():
    """Test basic MissingDependencyError creation."""
    error = MissingDependencyError(package="test-package")
    assert "test-package" in str(error)
    assert error.package == "test-package"


def test_missing_dependency_error_with_import_name():
    error = MissingDependencyError(package="PyYAML", import_name="yaml")
    assert "PyYAML" in str(error)
    assert "yaml" in str(error)
    assert error.import_name == "yaml"


def test_missing_dependency_error_with_instructions():
    error = MissingDependencyError(package="scipy", instructions="pip install scipy")
    assert "pip install scipy" in str(error)


def test_missing_dependency_error_with_original():
    original = ImportError("No module named 'test'")
    error = MissingDependencyError(package="test", original=original)
    assert error.original is original
    assert isinstance(error, RuntimeError)


def test_config_error_carries_location():
    error = ConfigError("unknown key 'x'", path="scenario.cfg", line=7, section="radar")
    assert str(error) == "scenario.cfg:7: unknown key 'x'"
    assert error.line == 7
    assert error.section == "radar"
    assert error.reason == "unknown key 'x'"


def test_config_error_without_path_uses_line():
    assert str(ConfigError("bad", line=3)) == "line 3: bad"
    assert str(ConfigError("bad")) == "bad"


@pytest.mark.parametrize(
    "exc_type, code",
    [
        (ConfigError, 1),
        (DataError, 2),
        (RdmFormatError, 2),
        (BadMagicError, 2),
        (OutOfRangeError, 2),
        (NumericError, 3),
        (DomainError, 3),
        (SingularMatrixError, 3),
        (StaleCacheError, 3),
    ],
)
def test_exit_codes_by_category(exc_type, code):
    assert issubclass(exc_type, WorkbenchError)
    assert exc_type.exit_code == code


def test_value_error_compatibility():
    assert issubclass(DomainError, ValueError)
    assert issubclass(OutOfRangeError, ValueError)
