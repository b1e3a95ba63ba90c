from __future__ import annotations

import numpy as np
import pytest

from curioflight.core.env import QuadrotorEnv
from curioflight.core.errors import CurioflightError
from curioflight.core.models import EnvConfig, HcmConfig, IcmConfig, PpoConfig, RunConfig, VizConfig
from curioflight.core.pipeline import Trainer, collect_batch, train, verify_curiosity_wiring
from curioflight.core.ppo import ActorCritic
from curioflight.core.report import read_metrics
from curioflight.core.visitation import VisitationGrid


def small_config(algorithm: str = "ppo", **overrides) -> RunConfig:
    return RunConfig(
        algorithm=algorithm,
        total_batches=2,
        checkpoint_interval=10,
        env=EnvConfig(max_flight_steps=40),
        ppo=PpoConfig(batch_size=64, minibatch_size=32, epochs=2, hidden_sizes=(8, 8)),
        icm=IcmConfig(hidden_sizes=(8, 8)),
        hcm=HcmConfig(segment_length=5, stride=5, heads_per_type=1, hidden_sizes=(8, 8), epochs=1),
        viz=VizConfig(rows=10, cols=10),
        **overrides,
    )


def test_collect_batch_fills_buffer_and_tracks_flights():
    config = small_config()
    env = QuadrotorEnv(config.env, config.vehicle)
    agent = ActorCritic.create(config.ppo, np.random.default_rng(0))
    grid = VisitationGrid(10, 10, 5.0, 5.0)
    buffer, stats = collect_batch(env, agent, 100, np.random.default_rng(1), np.random.default_rng(2), grid)

    assert buffer.full
    assert stats.steps == 100
    assert stats.flights >= 2
    assert grid.total == 100
    assert buffer.flight_ids[0] == 0
    ends = np.flatnonzero(buffer.terminals)
    assert len(ends) == stats.flights
    for end in ends[ends < 99]:
        assert buffer.flight_ids[end + 1] == buffer.flight_ids[end] + 1
    assert np.all(np.diff(buffer.flight_ids) >= 0)
    assert not np.any(buffer.positions[:, 2] == 0.0)


def test_plain_ppo_has_no_intrinsic_reward():
    result = Trainer(small_config("ppo")).run_batch()
    assert result.metrics.mean_r_int == 0.0
    assert result.curiosity.kind == "none"


def test_icm_run_assigns_intrinsic_reward():
    result = Trainer(small_config("ppo_icm")).run_batch()
    assert result.metrics.mean_r_int > 0.0
    assert result.curiosity.kind == "icm"
    assert result.curiosity.samples == 64


def test_hcm_run_assigns_intrinsic_reward():
    result = Trainer(small_config("ppo_hcm")).run_batch()
    assert result.metrics.mean_r_int > 0.0
    assert result.curiosity.kind == "hcm"
    assert result.curiosity.samples > 0
    assert len(result.curiosity.head_losses) == 2


def test_wiring_check_rejects_wrong_source():
    config = small_config()
    env = QuadrotorEnv(config.env, config.vehicle)
    agent = ActorCritic.create(config.ppo, np.random.default_rng(0))
    buffer, _ = collect_batch(env, agent, 8, np.random.default_rng(1), np.random.default_rng(2))
    verify_curiosity_wiring("ppo", buffer, "none")
    with pytest.raises(CurioflightError):
        verify_curiosity_wiring("ppo_hcm", buffer, "icm")
    buffer.r_int[3] = 0.5
    with pytest.raises(CurioflightError):
        verify_curiosity_wiring("ppo", buffer, "none")


def test_train_writes_run_artifacts(tmp_path):
    summary = train(small_config("ppo_hcm"), tmp_path / "run")
    out = tmp_path / "run"
    assert summary.batches == 2
    assert len(read_metrics(summary.metrics_csv)) == 2
    assert (out / "config.txt").exists()
    assert (out / "update_stats.csv").read_text(encoding="utf-8").count("\n") == 3
    assert [p.name for p in summary.checkpoints] == ["batch_0001.npz"]
    assert len(summary.grid_snapshots) == 2
    for batch in (0, 1):
        for suffix in ("npy", "pgm", "csv"):
            assert (out / "visitation" / f"batch_{batch:04d}.{suffix}").exists()
    first = np.load(out / "visitation" / "batch_0000.npy")
    second = np.load(out / "visitation" / "batch_0001.npy")
    assert first.sum() == second.sum() == 64
    assert not np.array_equal(first, second)


def test_checkpoint_interval(tmp_path):
    config = small_config("ppo").model_copy(update={"total_batches": 3, "checkpoint_interval": 2})
    summary = train(config, tmp_path)
    assert [p.name for p in summary.checkpoints] == ["batch_0001.npz", "batch_0002.npz"]


def test_same_seed_same_metrics(tmp_path):
    config = small_config("ppo_icm")
    a = train(config, tmp_path / "a")
    b = train(config, tmp_path / "b")
    assert a.metrics_csv.read_bytes() == b.metrics_csv.read_bytes()
    assert (tmp_path / "a" / "update_stats.csv").read_bytes() == (tmp_path / "b" / "update_stats.csv").read_bytes()


def test_different_seeds_differ(tmp_path):
    a = train(small_config("ppo"), tmp_path / "a")
    b = train(small_config("ppo", seed=1), tmp_path / "b")
    assert a.metrics_csv.read_bytes() != b.metrics_csv.read_bytes()


def test_batch_grid_uses_configured_normalization():
    config = small_config().model_copy(update={"viz": VizConfig(rows=10, cols=10, normalization="log")})
    result = Trainer(config).run_batch()
    assert result.grid.normalization == "log"
    assert result.grid.total == 64
    assert result.grid.normalized().max() == 1.0
