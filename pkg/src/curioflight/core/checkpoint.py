"""Versioned ``.npz`` checkpoints with an embedded JSON manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import zipfile

import numpy as np
import orjson

from curioflight.core.errors import CheckpointError, ShapeError
from curioflight.core.models import RunConfig
from curioflight.core.nn import MlpParams
from curioflight.core.ppo import ActorCritic

CHECKPOINT_FORMAT = "curioflight-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_KEY = "__manifest__"
AGENT_NETWORKS = ("policy", "value_ext", "value_int")


@dataclass
class Checkpoint:
    config: RunConfig
    batch: int
    agent: ActorCritic
    networks: dict[str, MlpParams]


def summary_path(path: Path) -> Path:
    return path.with_name(path.name + ".summary.txt")


def save_checkpoint(
    path: Path,
    config: RunConfig,
    batch: int,
    networks: dict[str, MlpParams],
) -> Path:
    """Write every tensor with its Adam moments plus a manifest and a shape summary.

    Args:
        path: Target file; parent directories are created.
        config: Run configuration, embedded so the checkpoint is self-describing.
        batch: Index of the last completed batch.
        networks: Parameter sets by name; the agent uses policy/value_ext/value_int.

    Returns:
        The written path.

    """
    arrays: dict[str, np.ndarray] = {}
    manifest_networks = {}
    for name, params in networks.items():
        for tensor, value in params.tensors.items():
            arrays[f"{name}/{tensor}"] = value
            arrays[f"{name}/{tensor}.m"] = params.m[tensor]
            arrays[f"{name}/{tensor}.v"] = params.v[tensor]
        manifest_networks[name] = {
            "step": params.step,
            "shapes": {tensor: list(shape) for tensor, shape in params.shapes().items()},
        }

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "batch": batch,
        "networks": manifest_networks,
        "config": config.model_dump(mode="json"),
    }
    arrays[MANIFEST_KEY] = np.frombuffer(orjson.dumps(manifest), dtype=np.uint8)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, **arrays)

    lines = [f"{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}  batch={batch}  algorithm={config.algorithm}"]
    for name, entry in manifest_networks.items():
        lines.append(f"{name}  (adam step {entry['step']})")
        lines.extend(f"  {tensor:<10} {tuple(shape)}" for tensor, shape in entry["shapes"].items())
    summary_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _read_manifest(data) -> dict:
    if MANIFEST_KEY not in data.files:
        raise CheckpointError("Checkpoint has no manifest")
    manifest = orjson.loads(data[MANIFEST_KEY].tobytes())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Unknown checkpoint format {manifest.get('format')!r}")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {manifest.get('version')!r}")
    return manifest


def load_checkpoint(path: Path, config: RunConfig | None = None) -> Checkpoint:
    """Load a checkpoint and rebuild the agent.

    Args:
        path: File written by save_checkpoint.
        config: Optional configuration to use instead of the embedded one;
            its network shapes must match the stored tensors.

    Raises:
        CheckpointError: file missing, unreadable or not a curioflight checkpoint.
        ShapeError: stored tensors do not fit the configured networks.

    """
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            manifest = _read_manifest(data)
            networks = {}
            for name, entry in manifest["networks"].items():
                tensors = {tensor: data[f"{name}/{tensor}"].copy() for tensor in entry["shapes"]}
                m = {tensor: data[f"{name}/{tensor}.m"].copy() for tensor in entry["shapes"]}
                v = {tensor: data[f"{name}/{tensor}.v"].copy() for tensor in entry["shapes"]}
                networks[name] = MlpParams(tensors=tensors, m=m, v=v, step=int(entry["step"]))
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, orjson.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    run_config = config or RunConfig.model_validate(manifest["config"])
    agent = ActorCritic.create(run_config.ppo, np.random.default_rng(0))
    for name in AGENT_NETWORKS:
        if name not in networks:
            raise CheckpointError(f"Checkpoint {path} has no '{name}' network")
        expected = getattr(agent, name).shapes()
        stored = networks[name].shapes()
        if expected != stored:
            raise ShapeError(f"Network '{name}' in {path} has shapes {stored}, configuration expects {expected}")
        setattr(agent, name, networks[name])
    return Checkpoint(config=run_config, batch=int(manifest["batch"]), agent=agent, networks=networks)
