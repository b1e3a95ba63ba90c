from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version
import platform

__version__ = "0.1.0"

STACK = ("numpy", "pydantic", "typer", "rich", "orjson")


def _installed(package: str) -> str | None:
    try:
        return version(package)
    except PackageNotFoundError:
        return None


def get_versions() -> dict[str, str | None]:
    """Versions of curioflight, the interpreter and the numeric/CLI stack."""
    versions: dict[str, str | None] = {
        "curioflight": __version__,
        "python": platform.python_version(),
    }
    versions.update({package: _installed(package) for package in STACK})
    return versions
