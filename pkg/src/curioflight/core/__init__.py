from __future__ import annotations

from curioflight.core.config import load_config, parse_config_text
from curioflight.core.env import QuadrotorEnv
from curioflight.core.models import RunConfig
from curioflight.core.pipeline import Trainer, train

__all__ = ["QuadrotorEnv", "RunConfig", "Trainer", "load_config", "parse_config_text", "train"]
