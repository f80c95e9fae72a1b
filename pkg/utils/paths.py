"""Output-root resolution shared by the CLI, the health check and run manifests."""

import os
from pathlib import Path

OUT_ENV = "RDTRACK_OUT"
DEFAULT_OUT = "results"


def default_output_root() -> Path:
    """Output root from RDTRACK_OUT, 'results' when unset."""
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
