"""Line-oriented ``section.key = value`` configuration files."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import orjson
from pydantic import BaseModel, ValidationError

from curioflight.core.errors import ConfigError
from curioflight.core.models import RunConfig

RUN_SECTION = "run"
_SECTIONS = ("vehicle", "env", "ppo", "icm", "hcm", "viz")


def _decode_value(raw: str) -> Any:
    try:
        return orjson.loads(raw)
    except orjson.JSONDecodeError:
        return raw


def _strip_comment(line: str) -> str:
    """Drop a ``#`` comment unless the ``#`` sits inside a double-quoted value."""
    quoted = False
    escaped = False
    for index, char in enumerate(line):
        if escaped:
            escaped = False
        elif char == "\\" and quoted:
            escaped = True
        elif char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            return line[:index]
    return line


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text into a validated RunConfig.

    Args:
        text: File contents, one ``section.key = value`` per line.
        source: Name used in error messages.

    Returns:
        RunConfig with defaults for every key not mentioned.

    Raises:
        ConfigError: malformed line, duplicate key, unknown key or invalid value.

    """
    data: dict[str, Any] = {}
    raw_values: dict[tuple[str, ...], str] = {}
    seen: set[str] = set()

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(line).strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {line!r}")

        key, raw_value = (part.strip() for part in stripped.split("=", 1))
        parts = key.split(".")
        if len(parts) < 2 or not all(parts):
            raise ConfigError(f"{source}:{lineno}: key '{key}' must look like section.key")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        seen.add(key)

        section, *path = parts
        if section == RUN_SECTION:
            target = data
        elif section in _SECTIONS:
            target = data.setdefault(section, {})
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}' (unknown section '{section}')")

        for name in path[:-1]:
            nested = target.setdefault(name, {})
            if not isinstance(nested, dict):
                raise ConfigError(f"{source}:{lineno}: key '{key}' conflicts with a scalar value")
            target = nested
        target[path[-1]] = _decode_value(raw_value)
        location = tuple(path) if section == RUN_SECTION else tuple(parts)
        raw_values[location] = raw_value

    return _validate(data, source, raw_values)


def _validate(data: dict[str, Any], source: str, raw_values: dict[tuple[str, ...], str]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        retyped = [
            tuple(error["loc"]) for error in e.errors()
            if error["type"] == "string_type" and tuple(error["loc"]) in raw_values
        ]
        if not retyped:
            raise ConfigError(_describe(e, source)) from e

    # Text fields keep the literal text of values such as `run.output_dir = 2024`.
    for location in retyped:
        target = data
        for name in location[:-1]:
            target = target[name]
        target[location[-1]] = raw_values[location]
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_describe(e, source)) from e


def _describe(e: ValidationError, source: str) -> str:
    problems = []
    for error in e.errors():
        location = ".".join(str(part) for part in error["loc"])
        if error["type"] == "extra_forbidden":
            problems.append(f"unknown key '{_qualify(location)}'")
        else:
            problems.append(f"'{_qualify(location)}': {error['msg']}")
    return f"{source}: " + "; ".join(problems)


def _qualify(location: str) -> str:
    if not location:
        return RUN_SECTION
    head = location.split(".", 1)[0]
    if head in _SECTIONS:
        return location
    return f"{RUN_SECTION}.{location}"


def load_config(path: Path) -> RunConfig:
    """Load a configuration file."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    return parse_config_text(text, source=str(path))


def dump_config(config: RunConfig) -> str:
    """Render every key of a RunConfig; the output parses back to an equal config."""
    lines: list[str] = [f"# curioflight run configuration ({config.algorithm})"]
    for name, value in config.model_dump().items():
        if name in _SECTIONS:
            continue
        lines.append(f"{RUN_SECTION}.{name} = {_encode_value(value)}")
    for section in _SECTIONS:
        model: BaseModel = getattr(config, section)
        lines.append("")
        lines.extend(_dump_section(section, model.model_dump()))
    return "\n".join(lines) + "\n"


def _dump_section(prefix: str, values: dict[str, Any]) -> list[str]:
    lines = []
    for name, value in values.items():
        if isinstance(value, dict):
            lines.extend(_dump_section(f"{prefix}.{name}", value))
        else:
            lines.append(f"{prefix}.{name} = {_encode_value(value)}")
    return lines


def _encode_value(value: Any) -> str:
    if isinstance(value, str):
        if value.strip() == value and "#" not in value and _decode_value(value) == value:
            return value
        return orjson.dumps(value).decode()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode_value(item) for item in value) + "]"
    return orjson.dumps(value).decode()


def apply_overrides(
    config: RunConfig,
    seed: int | None = None,
    output_dir: str | None = None,
) -> RunConfig:
    """Apply command-line overrides."""
    update: dict[str, Any] = {}
    if seed is not None:
        update["seed"] = seed
    if output_dir is not None:
        update["output_dir"] = output_dir
    if not update:
        return config
    return RunConfig.model_validate({**config.model_dump(), **update})
