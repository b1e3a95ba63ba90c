from __future__ import annotations

from curioflight.core._metadata import get_versions
from curioflight.core.pipeline import train

__all__ = ["get_versions", "train"]
