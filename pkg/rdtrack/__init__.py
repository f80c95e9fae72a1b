"""rdtrack public package interface."""

from __future__ import annotations

from typing import Any

__version__ = "0.1.0"
__all__ = ["main", "__version__"]


def main(*args: Any, **kwargs: Any) -> Any:
    """Lazy wrapper around :func:`rdtrack.main.main`."""

    from .main import main as _main

    return _main(*args, **kwargs)
