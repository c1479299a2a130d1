"""Bundled desk-scale systems, forecast profiles, and experiment configs."""

from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    p = resources.files(__package__) / name
    if not p.is_file():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return Path(str(p))
