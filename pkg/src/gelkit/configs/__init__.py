"""Bundled system definitions in the wire format, for CLI and test use."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def path_for(name: str) -> Path:
    """Filesystem path of a bundled system JSON (name without extension)."""
    ref = resources.files(__package__) / f"{name}.json"
    if not ref.is_file():
        have = sorted(
            p.name[:-5]
            for p in resources.files(__package__).iterdir()
            if p.name.endswith(".json")
        )
        raise FileNotFoundError(f"no bundled config {name!r}; have {have}")
    return Path(str(ref))
