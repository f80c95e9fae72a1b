"""Environment health check: Python version, runtime packages and a writable output root."""

import json
import sys
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, Tuple

from packaging.version import InvalidVersion, Version

from utils.paths import default_output_root

# Дистрибутив -> минимальная версия
REQUIRED_PACKAGES: Tuple[Tuple[str, str], ...] = (
    ("numpy", "1.24"),
    ("scipy", "1.10"),
    ("scikit-learn", "1.2"),
    ("matplotlib", "3.6"),
    ("PyYAML", "6.0.1"),
    ("Jinja2", "3.1.2"),
    ("jsonschema", "4.0.0"),
    ("colorama", "0.4.6"),
)
MIN_PYTHON = (3, 10)


def _check_package(name: str, minimum: str) -> Dict[str, Any]:
    try:
        installed = metadata.version(name)
    except metadata.PackageNotFoundError:
        return {"status": "fail", "message": f"{name} is missing", "required": f">={minimum}"}
    try:
        ok = Version(installed) >= Version(minimum)
    except InvalidVersion:
        return {"status": "fail", "message": f"{name} has unparsable version '{installed}'"}
    return {
        "status": "pass" if ok else "fail",
        "value": installed,
        "required": f">={minimum}",
        "message": f"{name} {installed}" + ("" if ok else f" (need >={minimum})"),
    }


def check_system_health() -> Dict[str, Any]:
    health: Dict[str, Any] = {
        "status": "healthy",
        "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "checks": {},
    }

    python_version = f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"
    health["checks"]["python_version"] = {
        "status": "pass" if sys.version_info >= MIN_PYTHON else "fail",
        "value": python_version,
        "required": ">=3.10",
    }

    for name, minimum in REQUIRED_PACKAGES:
        health["checks"][f"package_{name}"] = _check_package(name, minimum)

    out_root = default_output_root()
    try:
        out_root.mkdir(parents=True, exist_ok=True)
        marker = out_root / ".health_check"
        marker.touch()
        marker.unlink()
        health["checks"]["output_writable"] = {"status": "pass", "path": str(out_root.absolute())}
    except OSError as e:
        health["checks"]["output_writable"] = {"status": "fail", "message": str(e), "path": str(out_root)}

    if any(check["status"] != "pass" for check in health["checks"].values()):
        health["status"] = "unhealthy"
    return health


def health_check_handler() -> int:
    """JSON on stdout; 0 when healthy, 1 otherwise."""
    result = check_system_health()
    print(json.dumps(result, indent=2))
    return 0 if result["status"] == "healthy" else 1


def print_health_status() -> int:
    health = check_system_health()

    print("\nrdtrack health check")
    print("=" * 50)
    print(f"Status: {'HEALTHY' if health['status'] == 'healthy' else 'UNHEALTHY'}")
    print(f"Timestamp: {health['timestamp']}")
    print("\nChecks:")
    for check_name, check_data in health["checks"].items():
        icon = "[ok]" if check_data["status"] == "pass" else "[!!]"
        print(f"  {icon} {check_name}: {check_data.get('message', check_data.get('value', check_data.get('path', 'OK')))}")
    print(f"{'=' * 50}\n")

    return 0 if health["status"] == "healthy" else 1
