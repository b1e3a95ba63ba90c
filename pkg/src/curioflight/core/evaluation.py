"""Deterministic-policy evaluation of a checkpoint."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from curioflight.core import nn
from curioflight.core._logging import get_logger
from curioflight.core.checkpoint import load_checkpoint
from curioflight.core.env import QuadrotorEnv, TerminalCause, write_trajectory_csv
from curioflight.core.models import EvaluationReport, FlightOutcome, RunConfig

logger = get_logger(__name__)


def classify_outcome(cause: TerminalCause, goal_distance: float, tolerance: float) -> str:
    """reached_goal, crash or timeout for a finished flight."""
    if cause.is_failure:
        return "crash"
    if goal_distance <= tolerance:
        return "reached_goal"
    return "timeout"


def evaluate(
    checkpoint: Path,
    episodes: int,
    seed: int = 0,
    config: RunConfig | None = None,
    trajectory_dir: Path | None = None,
) -> EvaluationReport:
    """Fly the mean action of a checkpointed policy for ``episodes`` flights.

    Args:
        checkpoint: File written during training.
        episodes: Number of flights.
        seed: Seeds spawn, obstacle layout and motor noise.
        config: Overrides the configuration stored in the checkpoint.
        trajectory_dir: When given, each flight is dumped as ``flight_NNN.csv``.

    Returns:
        Per-flight outcomes and their totals.

    """
    if episodes <= 0:
        raise ValueError(f"episodes must be > 0, got {episodes}")
    loaded = load_checkpoint(checkpoint, config)
    run_config = loaded.config
    env = QuadrotorEnv(run_config.env, run_config.vehicle, record_trajectory=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if trajectory_dir is not None:
        trajectory_dir.mkdir(parents=True, exist_ok=True)

    flights = []
    for flight in range(episodes):
        obs = env.reset(rng)
        total_reward = 0.0
        min_obstacle = float("inf")
        while True:
            action = nn.squash(loaded.agent.act_deterministic(obs.vector))
            result = env.step(action, rng)
            total_reward += result.r_ext
            if len(env.obstacles):
                deltas = env.obstacles - env.state.position[:2]
                min_obstacle = min(min_obstacle, float(np.min(np.hypot(deltas[:, 0], deltas[:, 1]))))
            if result.terminal:
                break
            obs = result.observation

        csv_path = None
        if trajectory_dir is not None:
            csv_path = trajectory_dir / f"flight_{flight:03d}.csv"
            write_trajectory_csv(csv_path, env.trajectory)

        outcome = classify_outcome(result.terminal_cause, result.goal_distance, run_config.env.goal_tolerance)
        flights.append(FlightOutcome(
            flight=flight,
            outcome=outcome,
            terminal_cause=result.terminal_cause.value,
            steps=env.steps,
            final_pose_error=[float(e) for e in result.pose_error],
            final_goal_distance=result.goal_distance,
            min_obstacle_distance=min_obstacle if np.isfinite(min_obstacle) else 0.0,
            total_reward=total_reward,
            trajectory_csv=str(csv_path) if csv_path else None,
        ))
        logger.debug("flight %d: %s after %d steps", flight, outcome, env.steps)

    return EvaluationReport(
        checkpoint=str(checkpoint),
        seed=seed,
        episodes=episodes,
        reached_goal=sum(f.outcome == "reached_goal" for f in flights),
        crashes=sum(f.outcome == "crash" for f in flights),
        timeouts=sum(f.outcome == "timeout" for f in flights),
        flights=flights,
    )
