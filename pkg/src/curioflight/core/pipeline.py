"""Training orchestration: collect, add curiosity, update, record."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import time

import numpy as np

from curioflight.core import nn
from curioflight.core._logging import get_logger
from curioflight.core.checkpoint import save_checkpoint
from curioflight.core.config import dump_config
from curioflight.core.curiosity import (
    BundleBatch,
    CuriosityEnsemble,
    IcmBatch,
    IcmNets,
    assign_hcm_rewards,
    assign_icm_rewards,
    ensemble_rewards,
    hcm_update,
    icm_rewards,
    icm_update,
)
from curioflight.core.env import QuadrotorEnv
from curioflight.core.errors import CurioflightError, TrainingError
from curioflight.core.models import CuriosityStats, MetricsRow, RunConfig, UpdateStats
from curioflight.core.ppo import ActorCritic, RolloutBuffer, Transition, compute_advantages, ppo_update
from curioflight.core.report import (
    append_metrics_row,
    append_update_stats,
    write_metrics_header,
    write_update_stats_header,
)
from curioflight.core.visitation import VisitationGrid, render_grid

logger = get_logger(__name__)


@dataclass
class BatchFlightStats:
    """Per-step sums and per-flight counts gathered while collecting one batch."""

    steps: int = 0
    flights: int = 0
    failed_flights: int = 0
    pose_error_sum: np.ndarray = field(default_factory=lambda: np.zeros(6))
    goal_distance_sum: float = 0.0
    obstacle_distance_sum: float = 0.0

    def mean_pose_error(self) -> np.ndarray:
        return self.pose_error_sum / max(self.steps, 1)

    def mean_goal_distance(self) -> float:
        return self.goal_distance_sum / max(self.steps, 1)

    def mean_obstacle_distance(self) -> float:
        return self.obstacle_distance_sum / max(self.steps, 1)


def collect_batch(
    env: QuadrotorEnv,
    agent: ActorCritic,
    batch_size: int,
    env_rng: np.random.Generator,
    action_rng: np.random.Generator,
    grid: VisitationGrid | None = None,
) -> tuple[RolloutBuffer, BatchFlightStats]:
    """Fly the stochastic policy for ``batch_size`` steps, resetting after every terminal.

    Args:
        env: Environment; reset at the start of the batch.
        agent: Policy and value networks.
        batch_size: Number of transitions to collect.
        env_rng: Spawn, obstacle and motor-noise randomness.
        action_rng: Exploration noise.
        grid: When given, receives the XY position after every step.

    Returns:
        Filled buffer (flight ids start at 0) and flight statistics.

    """
    buffer = RolloutBuffer(batch_size)
    stats = BatchFlightStats()
    obs = env.reset(env_rng)
    flight_id = 0

    for _ in range(batch_size):
        vector = obs.vector
        raw, log_prob, v_ext, v_int = agent.act(vector, action_rng)
        position = env.state.position.copy()
        result = env.step(nn.squash(raw), env_rng)
        if grid is not None:
            grid.add_point(env.state.position)

        buffer.add(Transition(
            obs=vector,
            action=raw,
            log_prob_old=log_prob,
            r_ext=result.r_ext,
            v_ext=v_ext,
            v_int=v_int,
            terminal=result.terminal,
            flight_id=flight_id,
            next_obs=result.observation.vector,
            position=position,
        ))
        stats.steps += 1
        stats.pose_error_sum += result.pose_error
        stats.goal_distance_sum += result.goal_distance
        stats.obstacle_distance_sum += result.mean_obstacle_distance

        if result.terminal:
            stats.flights += 1
            stats.failed_flights += int(result.terminal_cause.is_failure)
            obs = env.reset(env_rng)
            flight_id += 1
        else:
            obs = result.observation

    if not buffer.terminals[buffer.size - 1]:
        heads = agent.values(obs.vector)
        buffer.last_v_ext, buffer.last_v_int = float(heads.v_ext), float(heads.v_int)
    return buffer, stats


def verify_curiosity_wiring(algorithm: str, buffer: RolloutBuffer, source: str) -> None:
    """Check that intrinsic rewards came from the source the algorithm calls for."""
    expected = {"ppo": "none", "ppo_icm": "icm", "ppo_hcm": "hcm"}[algorithm]
    if source != expected:
        raise CurioflightError(f"{algorithm} must assign intrinsic rewards via '{expected}', got '{source}'")
    if algorithm == "ppo" and np.any(buffer.r_int[:buffer.size] != 0.0):
        raise CurioflightError("ppo run produced nonzero intrinsic rewards")


@dataclass
class BatchResult:
    metrics: MetricsRow
    update: UpdateStats
    curiosity: CuriosityStats
    grid: VisitationGrid


@dataclass
class TrainingSummary:
    output_dir: Path
    batches: int
    metrics_csv: Path
    checkpoints: list[Path]
    grid_snapshots: list[Path]


class Trainer:
    """One training run: owns the environment, networks and random streams.

    Streams are spawned from one SeedSequence so equal seeds give
    byte-identical metrics.
    """

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        init_seq, env_seq, action_seq, update_seq, curiosity_seq = np.random.SeedSequence(config.seed).spawn(5)
        init_rng = np.random.default_rng(init_seq)
        self.env_rng = np.random.default_rng(env_seq)
        self.action_rng = np.random.default_rng(action_seq)
        self.update_rng = np.random.default_rng(update_seq)
        self.curiosity_rng = np.random.default_rng(curiosity_seq)

        self.env = QuadrotorEnv(config.env, config.vehicle)
        self.agent = ActorCritic.create(config.ppo, init_rng)
        self.icm: IcmNets | None = None
        self.ensemble: CuriosityEnsemble | None = None
        if config.algorithm == "ppo_icm":
            self.icm = IcmNets.create(config.icm, self.curiosity_rng)
        elif config.algorithm == "ppo_hcm":
            self.ensemble = CuriosityEnsemble.create(config.hcm, self.curiosity_rng)
        self.batch = 0

    def networks(self):
        networks = dict(self.agent.networks())
        if self.icm is not None:
            networks.update({f"icm/{name}": params for name, params in self.icm.networks().items()})
        if self.ensemble is not None:
            for index, head in enumerate(self.ensemble.heads):
                networks.update({f"hcm{index}_{head.kind}/{n}": p for n, p in head.networks().items()})
        return networks

    def new_grid(self) -> VisitationGrid:
        x_max, y_max, _ = self.config.env.bounds
        viz = self.config.viz
        return VisitationGrid(viz.rows, viz.cols, x_max, y_max, viz.normalization)

    def run_batch(self) -> BatchResult:
        config = self.config
        grid = self.new_grid()
        buffer, flights = collect_batch(
            self.env, self.agent, config.ppo.batch_size, self.env_rng, self.action_rng, grid,
        )

        source = "none"
        icm_batch: IcmBatch | None = None
        bundles: BundleBatch | None = None
        if self.icm is not None:
            icm_batch = assign_icm_rewards(buffer, self.icm)
            source = "icm"
        elif self.ensemble is not None:
            bundles = assign_hcm_rewards(buffer, self.ensemble)
            source = "hcm"
        verify_curiosity_wiring(config.algorithm, buffer, source)

        compute_advantages(buffer, config.ppo.gamma, config.ppo.lam, config.ppo.standard_td)
        update = ppo_update(buffer, self.agent, config.ppo, self.update_rng)

        curiosity = CuriosityStats()
        if self.icm is not None and icm_batch is not None:
            mean_reward = float(np.mean(icm_rewards(self.icm, icm_batch)))
            curiosity = icm_update(
                self.icm, icm_batch, config.icm.lr, config.icm.epochs, config.icm.minibatch_size, self.curiosity_rng,
            ).model_copy(update={"mean_reward": mean_reward})
        elif self.ensemble is not None and bundles is not None:
            mean_reward = float(np.mean(ensemble_rewards(bundles, self.ensemble)))
            curiosity = hcm_update(
                bundles, self.ensemble, config.hcm.lr, config.hcm.epochs, config.hcm.minibatch_size,
            ).model_copy(update={"mean_reward": mean_reward})

        errors = flights.mean_pose_error()
        metrics = MetricsRow(
            batch=self.batch,
            mean_r_ext=float(np.mean(buffer.r_ext[:buffer.size])),
            mean_r_int=float(np.mean(buffer.r_int[:buffer.size])),
            flights=flights.flights,
            failed_flights=flights.failed_flights,
            err_x=float(errors[0]),
            err_y=float(errors[1]),
            err_z=float(errors[2]),
            err_roll=float(errors[3]),
            err_pitch=float(errors[4]),
            err_yaw=float(errors[5]),
            goal_distance=flights.mean_goal_distance(),
            obstacle_distance=flights.mean_obstacle_distance(),
            policy_loss=update.policy_loss,
            value_ext_loss=update.value_ext_loss,
            value_int_loss=update.value_int_loss,
            entropy=update.entropy,
            curiosity_loss=curiosity.total_loss,
        )
        self.batch += 1
        return BatchResult(metrics=metrics, update=update, curiosity=curiosity, grid=grid)


def train(config: RunConfig, output_dir: Path | None = None) -> TrainingSummary:
    """Run ``config.total_batches`` batches and write the run artifacts.

    Layout of the output directory: ``config.txt``, ``metrics.csv``,
    ``update_stats.csv``, ``visitation/batch_NNNN.{npy,pgm,csv}`` and
    ``checkpoints/batch_NNNN.npz`` (every ``checkpoint_interval`` batches and
    after the last one).

    Raises:
        TrainingError: a batch failed; an emergency checkpoint was written first.

    """
    out = Path(output_dir or config.output_dir)
    (out / "visitation").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(config), encoding="utf-8")
    metrics_csv = out / "metrics.csv"
    stats_csv = out / "update_stats.csv"
    write_metrics_header(metrics_csv)
    write_update_stats_header(stats_csv)

    trainer = Trainer(config)
    checkpoints: list[Path] = []
    snapshots: list[Path] = []
    logger.info("Training %s for %d batches (seed %d) -> %s", config.algorithm, config.total_batches, config.seed, out)

    for batch in range(config.total_batches):
        started = time.perf_counter()
        try:
            result = trainer.run_batch()
        except (CurioflightError, FloatingPointError, ValueError) as e:
            emergency = out / "checkpoints" / f"failed_batch_{batch:04d}.npz"
            save_checkpoint(emergency, config, batch, trainer.networks())
            raise TrainingError(batch, e, str(emergency)) from e

        append_metrics_row(metrics_csv, result.metrics)
        append_update_stats(stats_csv, batch, result.update, result.curiosity)
        stem = out / "visitation" / f"batch_{batch:04d}"
        result.grid.save(stem.with_suffix(".npy"))
        image, _ = render_grid(result.grid, stem.with_suffix(".pgm"))
        snapshots.append(image)

        last = batch == config.total_batches - 1
        if (batch + 1) % config.checkpoint_interval == 0 or last:
            path = out / "checkpoints" / f"batch_{batch:04d}.npz"
            checkpoints.append(save_checkpoint(path, config, batch, trainer.networks()))

        m = result.metrics
        logger.info(
            "batch %d: r_ext=%.4f r_int=%.4f flights=%d failed=%d policy_loss=%.4f (%.1fs)",
            batch, m.mean_r_ext, m.mean_r_int, m.flights, m.failed_flights, m.policy_loss,
            time.perf_counter() - started,
        )
        if result.update.aborted:
            logger.warning("batch %d: PPO update aborted on a non-finite loss", batch)

    return TrainingSummary(
        output_dir=out,
        batches=config.total_batches,
        metrics_csv=metrics_csv,
        checkpoints=checkpoints,
        grid_snapshots=snapshots,
    )
