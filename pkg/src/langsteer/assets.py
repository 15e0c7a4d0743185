"""Access to files shipped inside the package (fixtures, default configs)."""

from importlib import resources
from pathlib import Path


def data_path(name: str) -> Path:
    """Absolute path of a packaged data file."""
    path = Path(str(resources.files("langsteer").joinpath("data", name)))
    if not path.exists():
        raise FileNotFoundError(f"packaged data file not found: {name}")
    return path
