"""Tests for segment bundles, curiosity heads, the ensemble and reward spreading."""

from __future__ import annotations

import math

import numpy as np
import pytest

from curioflight.core import nn
from curioflight.core.curiosity import (
    BundleBatch,
    CuriosityEnsemble,
    CuriosityHead,
    SegmentBundle,
    assign_hcm_rewards,
    distribute_trajectory,
    ensemble_reward,
    ensemble_rewards,
    f_wp,
    hcm_update,
    make_bundles,
)
from curioflight.core.curiosity.hcm import head_reward_sr, head_reward_ss
from curioflight.core.models import HcmConfig
from curioflight.core.ppo import RolloutBuffer

OBS = 4
SMALL = HcmConfig(segment_length=3, stride=2, heads_per_type=2, hidden_sizes=(32, 32))


def blank_buffer(size: int, obs_size: int = OBS) -> RolloutBuffer:
    buffer = RolloutBuffer(size, obs_size=obs_size, action_size=1)
    buffer.size = size
    return buffer


def synthetic_batch(count: int, n: int, seed: int = 0) -> BundleBatch:
    rng = np.random.default_rng(seed)
    steps = rng.normal(scale=0.05, size=(count, 2 * n + 1, 3))
    return BundleBatch(
        past=rng.normal(scale=0.3, size=(count, n + 1, OBS)),
        future=rng.normal(scale=0.3, size=(count, n + 1, OBS)),
        positions=np.cumsum(steps, axis=1),
        rewards=rng.normal(scale=0.3, size=(count, n + 1)),
        anchors=np.arange(count),
    )


def stationary_bundle(n: int) -> SegmentBundle:
    return SegmentBundle(
        zeta_past=np.zeros((n + 1, OBS)),
        zeta_future=np.zeros((n + 1, OBS)),
        positions=np.ones((2 * n + 1, 3)),
        gamma_future=np.zeros(n + 1),
        anchor=n,
    )


def biased_head(loss: float, n: int = 2) -> CuriosityHead:
    """SS head with zero weights whose inverse loss on a stationary bundle is ``loss``."""
    head = CuriosityHead.create("ss", HcmConfig(segment_length=n, hidden_sizes=(4, 4)), seed=0, obs_size=OBS)
    head.inverse = nn.zero_params(head.inverse_arch)
    head.forward = nn.zero_params(head.forward_arch)
    head.inverse.tensors["b2"][0] = math.sqrt(2 * loss)
    return head


def frozen(head: CuriosityHead) -> dict[str, dict[str, np.ndarray]]:
    return {name: {k: t.copy() for k, t in p.tensors.items()} for name, p in head.networks().items()}


def test_single_window_flight_gives_one_bundle():
    n = 3
    buffer = blank_buffer(2 * n + 1)
    buffer.terminals[2 * n] = True
    bundles = make_bundles(buffer, n, 2)
    assert [b.anchor for b in bundles] == [n]
    assert bundles[0].zeta_past.shape == (n + 1, OBS)
    assert bundles[0].positions.shape == (2 * n + 1, 3)
    assert bundles[0].gamma_future.shape == (n + 1,)


def test_terminal_inside_window_skips_bundle():
    n = 3
    buffer = blank_buffer(2 * n + 1)
    buffer.terminals[n] = True
    assert make_bundles(buffer, n, 1) == []


def test_bundle_count_for_full_batch():
    size, n, stride = 16384, 50, 25
    buffer = blank_buffer(size, obs_size=8)
    assert len(make_bundles(buffer, n, stride)) == (size - 1 - 2 * n) // stride + 1 == 652


def test_bundles_never_straddle_flights():
    buffer = blank_buffer(20)
    buffer.terminals[9] = True
    buffer.flight_ids[10:] = 1
    anchors = [b.anchor for b in make_bundles(buffer, 2, 1)]
    assert anchors == [2, 3, 4, 5, 6, 7, 12, 13, 14, 15, 16, 17]


def test_bundle_contents_follow_the_buffer():
    buffer = blank_buffer(9)
    buffer.obs[:, 0] = np.arange(9)
    buffer.r_ext[:] = np.arange(9) * 10
    (bundle,) = make_bundles(buffer, 4, 10)
    assert np.array_equal(bundle.zeta_past[:, 0], np.arange(5))
    assert np.array_equal(bundle.zeta_future[:, 0], np.arange(4, 9))
    assert np.array_equal(bundle.gamma_future, np.arange(4, 9) * 10)


def test_waypoints_of_stationary_vehicle_are_zero():
    assert np.array_equal(f_wp(np.full((9, 3), 2.5)), np.zeros((3, 3)))


def test_waypoints_of_uniform_motion():
    v, dt = np.array([1.0, -0.5, 0.2]), 0.01
    for n, quarter in ((4, 2), (5, 3), (50, 25)):
        positions = np.arange(2 * n + 1)[:, None] * v * dt
        wp = f_wp(positions)
        assert wp == pytest.approx(np.stack([v * dt * quarter, v * dt * n, v * dt * 2 * n]))


def test_waypoints_are_translation_invariant():
    positions = np.cumsum(np.random.default_rng(0).normal(size=(7, 3)), axis=0)
    assert f_wp(positions + np.array([3.0, -1.0, 2.0])) == pytest.approx(f_wp(positions))


def test_waypoints_of_stacked_windows():
    positions = np.random.default_rng(1).normal(size=(4, 11, 3))
    stacked = f_wp(positions)
    assert stacked.shape == (4, 3, 3)
    assert stacked[2] == pytest.approx(f_wp(positions[2]))


def test_perfect_prediction_gives_zero_curiosity():
    head = biased_head(0.0)
    r_c, inverse_loss, forward_loss = head_reward_ss(stationary_bundle(2), head, 0.2)
    assert (r_c, inverse_loss, forward_loss) == (0.0, 0.0, 0.0)


def test_head_reward_mixes_inverse_and_forward_losses():
    config = HcmConfig(segment_length=2, hidden_sizes=(8, 8))
    batch = synthetic_batch(1, 2, seed=4)
    bundle = SegmentBundle(
        zeta_past=batch.past[0], zeta_future=batch.future[0], positions=batch.positions[0],
        gamma_future=batch.rewards[0], anchor=0,
    )
    ss = CuriosityHead.create("ss", config, seed=1, obs_size=OBS)
    sr = CuriosityHead.create("sr", config, seed=2, obs_size=OBS)

    r_c, inverse_loss, forward_loss = head_reward_ss(bundle, ss, 0.3)
    assert r_c == pytest.approx(0.7 * inverse_loss + 0.3 * forward_loss)
    assert head_reward_ss(bundle, ss, 0.0)[0] == pytest.approx(inverse_loss)
    assert head_reward_sr(bundle, sr, 1.0)[0] == pytest.approx(head_reward_sr(bundle, sr, 0.5)[2])

    inverse_in, waypoints, _, _ = sr.inputs(BundleBatch.stack([bundle]))
    predicted, _ = nn.forward(sr.inverse, sr.inverse_arch, inverse_in)
    assert head_reward_sr(bundle, sr, 0.0)[1] == pytest.approx(0.5 * np.sum(np.square(predicted - waypoints)))


def test_head_reward_rejects_wrong_kind():
    head = CuriosityHead.create("sr", HcmConfig(segment_length=2, hidden_sizes=(4, 4)), seed=0, obs_size=OBS)
    with pytest.raises(ValueError):
        head_reward_ss(stationary_bundle(2), head, 0.2)


def test_ensemble_reward_is_scaled_mean():
    heads = [biased_head(float(k)) for k in range(1, 11)]
    ensemble = CuriosityEnsemble(heads=heads, beta=0.0, alpha_curiosity=1.0, kappa=0.9, segment_length=2, stride=1)
    assert ensemble_reward(stationary_bundle(2), ensemble) == pytest.approx(5.5)

    ensemble.alpha_curiosity = 0.0
    assert ensemble_reward(stationary_bundle(2), ensemble) == 0.0


def test_ensemble_reward_lies_between_head_extremes():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    batch = synthetic_batch(6, SMALL.segment_length)
    per_head = SMALL.alpha_curiosity * ensemble.head_rewards(batch)
    rewards = ensemble_rewards(batch, ensemble)
    assert np.all(rewards >= per_head.min(axis=0) - 1e-12)
    assert np.all(rewards <= per_head.max(axis=0) + 1e-12)


def test_ensemble_builds_both_head_kinds_with_distinct_seeds():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    assert [h.kind for h in ensemble.heads] == ["ss", "ss", "sr", "sr"]
    assert len({h.seed for h in ensemble.heads}) == 4


def test_identically_seeded_heads_stay_identical():
    batch = synthetic_batch(10, SMALL.segment_length)
    a = CuriosityHead.create("ss", SMALL, seed=5, obs_size=OBS)
    b = CuriosityHead.create("ss", SMALL, seed=5, obs_size=OBS)
    for _ in range(3):
        a.train(batch, SMALL.beta, 1e-3, epochs=2, minibatch_size=4)
        b.train(batch, SMALL.beta, 1e-3, epochs=2, minibatch_size=4)
    for name, params in a.networks().items():
        for key, tensor in params.tensors.items():
            assert np.array_equal(tensor, b.networks()[name][key])


def test_zero_learning_rate_leaves_heads():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    before = [frozen(h) for h in ensemble.heads]
    stats = hcm_update(synthetic_batch(8, SMALL.segment_length), ensemble, lr=0.0, epochs=2, minibatch_size=4)
    assert stats.kind == "hcm"
    assert len(stats.head_losses) == 4
    for head, snapshot in zip(ensemble.heads, before):
        for name, params in head.networks().items():
            for key, tensor in params.tensors.items():
                assert np.array_equal(tensor, snapshot[name][key])


def test_non_finite_rewards_abort_only_reward_heads():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    batch = synthetic_batch(8, SMALL.segment_length)
    batch.rewards[3, 1] = np.nan
    before = [frozen(h) for h in ensemble.heads]
    stats = hcm_update(batch, ensemble, lr=1e-3, minibatch_size=2)
    assert stats.aborted_heads == [2, 3]
    assert math.isfinite(stats.total_loss)
    for index in (2, 3):
        for name, params in ensemble.heads[index].networks().items():
            for key, tensor in params.tensors.items():
                assert np.array_equal(tensor, before[index][name][key])
    assert not np.array_equal(ensemble.heads[0].inverse["w0"], before[0]["inverse"]["w0"])


def test_novelty_decays_and_unseen_bundles_stay_curious():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    seen = synthetic_batch(16, SMALL.segment_length, seed=1)
    unseen = BundleBatch(
        past=-3.0 * seen.past + 1.0,
        future=-3.0 * seen.future + 1.0,
        positions=-3.0 * seen.positions,
        rewards=-3.0 * seen.rewards + 1.0,
        anchors=seen.anchors,
    )
    start = float(np.mean(ensemble_rewards(seen, ensemble)))
    for _ in range(500):
        hcm_update(seen, ensemble, lr=3e-3, minibatch_size=16)
        if np.mean(ensemble_rewards(seen, ensemble)) <= 0.5 * start:
            break
    trained = float(np.mean(ensemble_rewards(seen, ensemble)))
    assert trained <= 0.5 * start
    assert float(np.mean(ensemble_rewards(unseen, ensemble))) > trained


def test_empty_bundle_batch_rejected():
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    with pytest.raises(ValueError):
        hcm_update(synthetic_batch(0, SMALL.segment_length), ensemble, lr=1e-3)


def test_head_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    config = HcmConfig(segment_length=2, hidden_sizes=(6, 6))
    batch = synthetic_batch(3, 2, seed=2)
    for kind in ("ss", "sr"):
        head = CuriosityHead.create(kind, config, seed=7, obs_size=OBS)
        _, grads = head.loss_and_grads(batch, 0.2)
        for name, params in head.networks().items():
            error = nn.gradient_check(lambda: head.loss_and_grads(batch, 0.2)[0][2], params, grads[name], rng)
            assert error < 1e-4


def test_distribute_decays_geometrically():
    buffer = blank_buffer(11)
    distribute_trajectory(buffer, 5, 1.0, 0.5, 3)
    assert buffer.r_int[5] == 1.0
    assert buffer.r_int[4] == buffer.r_int[6] == 0.5
    assert buffer.r_int[2] == buffer.r_int[8] == 0.125
    assert buffer.r_int[1] == buffer.r_int[9] == 0.0


def test_distribute_zero_reward_changes_nothing():
    buffer = blank_buffer(11)
    buffer.r_int[:] = 0.3
    distribute_trajectory(buffer, 5, 0.0, 0.9, 5)
    assert np.array_equal(buffer.r_int, np.full(11, 0.3))


def test_overlapping_anchors_add_up():
    near = blank_buffer(11)
    distribute_trajectory(near, 3, 1.0, 0.5, 5)
    distribute_trajectory(near, 5, 1.0, 0.5, 5)
    assert near.r_int[4] == 1.0

    far = blank_buffer(11)
    distribute_trajectory(far, 3, 1.0, 0.5, 5)
    distribute_trajectory(far, 7, 1.0, 0.5, 5)
    assert far.r_int[5] == 0.5


def test_distribute_stops_at_flight_and_buffer_edges():
    buffer = blank_buffer(12)
    buffer.terminals[5] = True
    buffer.flight_ids[6:] = 1
    distribute_trajectory(buffer, 4, 1.0, 0.5, 4)
    assert buffer.r_int[5] == 0.5
    assert np.all(buffer.r_int[6:] == 0.0)
    assert buffer.r_int[0] == 0.0625

    distribute_trajectory(buffer, 6, 1.0, 0.5, 4)
    assert buffer.r_int[5] == 0.5
    assert buffer.r_int[7] == 0.5

    distribute_trajectory(buffer, 11, 2.0, 0.5, 4)
    assert buffer.r_int[11] == 2.0


def test_distribute_rejects_bad_arguments():
    buffer = blank_buffer(5)
    with pytest.raises(IndexError):
        distribute_trajectory(buffer, 5, 1.0, 0.5, 2)
    with pytest.raises(ValueError):
        distribute_trajectory(buffer, 2, 1.0, 1.0, 2)


def test_assign_rewards_marks_anchor_neighbourhoods():
    buffer = blank_buffer(30)
    rng = np.random.default_rng(0)
    buffer.obs[:] = rng.normal(scale=0.3, size=(30, OBS))
    buffer.positions[:] = np.cumsum(rng.normal(scale=0.05, size=(30, 3)), axis=0)
    ensemble = CuriosityEnsemble.create(SMALL, rng, obs_size=OBS)
    batch = assign_hcm_rewards(buffer, ensemble)
    assert batch is not None
    assert list(batch.anchors) == list(range(3, 27, 2))
    assert np.all(buffer.r_int[:29] > 0)
    assert buffer.r_int[29] == 0.0


def test_assign_rewards_without_long_flights():
    buffer = blank_buffer(6)
    buffer.terminals[2] = True
    buffer.flight_ids[3:] = 1
    ensemble = CuriosityEnsemble.create(SMALL, np.random.default_rng(0), obs_size=OBS)
    assert assign_hcm_rewards(buffer, ensemble) is None
    assert np.array_equal(buffer.r_int, np.zeros(6))
