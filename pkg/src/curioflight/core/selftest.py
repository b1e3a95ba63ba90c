"""Fast oracle and property checks runnable from the command line."""

from __future__ import annotations

from collections.abc import Callable
import math

import numpy as np

from curioflight.core import dynamics, nn
from curioflight.core._logging import get_logger
from curioflight.core._metadata import get_versions
from curioflight.core.curiosity import BundleBatch, CuriosityHead, IcmBatch, IcmNets, distribute_trajectory
from curioflight.core.curiosity.icm import icm_loss_and_grads
from curioflight.core.env import OBSERVATION_SIZE, compute_flight_reward
from curioflight.core.models import (
    EnvConfig,
    HcmConfig,
    IcmConfig,
    PpoConfig,
    SelfTestCheck,
    SelfTestMetadata,
    SelfTestResult,
    SelfTestSummary,
    VehicleParams,
)
from curioflight.core.ppo import (
    ActorCritic,
    RolloutBuffer,
    Transition,
    clipped_surrogate,
    compute_gae,
    ppo_loss_and_grads,
)
from curioflight.core.visitation import VisitationGrid, to_pixels

logger = get_logger(__name__)

GRADIENT_TOLERANCE = 1e-4


def brute_force_gae(rewards, values, terminals, gamma: float, lam: float) -> np.ndarray:
    """O(T^2) reference: sum (gamma * lam)^l * delta_{t+l} up to the next terminal."""
    size = len(rewards)
    deltas = [
        rewards[t] + gamma * values[t + 1] * (1.0 - terminals[t]) - values[t] for t in range(size)
    ]
    advantages = np.zeros(size)
    for t in range(size):
        total = 0.0
        for offset, k in enumerate(range(t, size)):
            total += (gamma * lam) ** offset * deltas[k]
            if terminals[k]:
                break
        advantages[t] = total
    return advantages


def _check(name: str, passed: bool, detail: str) -> SelfTestCheck:
    return SelfTestCheck(name=name, passed=bool(passed), detail=detail)


def check_gradients(rng: np.random.Generator) -> SelfTestCheck:
    config = PpoConfig(hidden_sizes=(8, 8), c2=0.05)
    agent = ActorCritic.create(config, rng)
    obs = rng.normal(size=(6, OBSERVATION_SIZE))
    actions = rng.normal(size=(6, 4))
    out = agent.distribution(obs)
    log_probs, _ = nn.log_prob_and_entropy(out, actions)
    old = log_probs + np.array([-0.5, 0.0, 0.5, -0.5, 0.0, 0.5])
    advantages = rng.normal(size=6)
    returns_ext, returns_int = rng.normal(size=6), rng.normal(size=6)

    def loss() -> float:
        parts, _ = ppo_loss_and_grads(agent, obs, actions, old, advantages, returns_ext, returns_int, config)
        return parts.total

    _, grads = ppo_loss_and_grads(agent, obs, actions, old, advantages, returns_ext, returns_int, config)
    worst = max(
        nn.gradient_check(loss, params, grads[name], rng) for name, params in agent.networks().items()
    )

    icm = IcmNets.create(IcmConfig(hidden_sizes=(8, 8)), rng)
    batch = IcmBatch(obs=obs, actions=np.tanh(actions), next_obs=rng.normal(size=(6, OBSERVATION_SIZE)))
    _, icm_grads = icm_loss_and_grads(icm, batch)
    for name, params in icm.networks().items():
        worst = max(worst, nn.gradient_check(lambda: icm_loss_and_grads(icm, batch)[0][2], params, icm_grads[name], rng))

    hcm = HcmConfig(segment_length=2, hidden_sizes=(6, 6))
    bundles = BundleBatch(
        past=rng.normal(size=(3, 3, OBSERVATION_SIZE)),
        future=rng.normal(size=(3, 3, OBSERVATION_SIZE)),
        positions=rng.normal(size=(3, 5, 3)),
        rewards=rng.normal(size=(3, 3)),
        anchors=np.arange(3),
    )
    for kind in ("ss", "sr"):
        head = CuriosityHead.create(kind, hcm, seed=7)
        _, head_grads = head.loss_and_grads(bundles, hcm.beta)
        for name, params in head.networks().items():
            worst = max(
                worst,
                nn.gradient_check(lambda: head.loss_and_grads(bundles, hcm.beta)[0][2], params, head_grads[name], rng),
            )
    return _check("gradients", worst < GRADIENT_TOLERANCE, f"max relative error {worst:.2e} (< {GRADIENT_TOLERANCE})")


def check_gae(rng: np.random.Generator) -> SelfTestCheck:
    worst = 0.0
    for _ in range(200):
        size = int(rng.integers(1, 65))
        rewards = rng.normal(size=size)
        values = rng.normal(size=size + 1)
        terminals = rng.random(size) < 0.1
        fast = compute_gae(rewards, values, terminals, 0.99, 0.95)
        worst = max(worst, float(np.max(np.abs(fast - brute_force_gae(rewards, values, terminals, 0.99, 0.95)))))
    return _check("gae_oracle", worst < 1e-10, f"max abs error {worst:.2e} over 200 sequences")


def check_clip(rng: np.random.Generator) -> SelfTestCheck:
    ratio = rng.uniform(0.0, 3.0, size=10_000)
    advantage = rng.normal(size=10_000)
    result = clipped_surrogate(np.log(ratio), np.zeros_like(ratio), advantage, 0.2)
    direct = np.minimum(ratio * advantage, np.clip(ratio, 0.8, 1.2) * advantage)
    pessimistic = (advantage > 0) & (ratio > 1.2)
    ok = np.allclose(result, direct, rtol=0, atol=1e-12) and np.all(
        result[pessimistic] <= (ratio * advantage)[pessimistic],
    )
    return _check("clip_semantics", ok, "10000 random (r, A) pairs at eps=0.2")


def check_physics() -> SelfTestCheck:
    params = VehicleParams(motor_noise_std=0.0, linear_drag_coeff=0.0, angular_drag_coeff=0.0)
    hover = dynamics.hover_speed(params)
    linear, angular = dynamics.accelerations(
        np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.full(4, hover), params,
    )
    residual = float(np.linalg.norm(linear) + np.linalg.norm(angular))
    fall, _ = dynamics.accelerations(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.zeros(4), params)
    ok = residual < 1e-6 and fall[2] == -params.gravity
    return _check("physics", ok, f"hover residual {residual:.2e} m/s^2, free fall {fall[2]} m/s^2")


def check_rewards() -> SelfTestCheck:
    config = EnvConfig()
    goal = (*config.goal_position, config.goal_roll, config.goal_pitch, 0.0)
    at_goal = compute_flight_reward(goal, config, psi_d=0.0)
    limit = config.bounds[0] / 2
    inside = compute_flight_reward((limit, 0.0, 1.5, 0.0, 0.0, 0.0), config, psi_d=0.0)
    outside = compute_flight_reward((limit + 1e-9, 0.0, 1.5, 0.0, 0.0, 0.0), config, psi_d=0.0)
    ok = at_goal == 3 * config.alpha_p and math.isclose(inside, 2.5) and math.isclose(outside, 1.0)
    return _check("rewards", ok, f"r_flight at goal {at_goal}, x-axis edge {inside} / {outside}")


def check_kappa_decay() -> SelfTestCheck:
    n, kappa = 10, 0.9
    transitions = [
        Transition(obs=np.zeros(2), action=np.zeros(1), log_prob_old=0.0, r_ext=0.0, v_ext=0.0, v_int=0.0,
                   terminal=t == 14, flight_id=0 if t <= 14 else 1)
        for t in range(40)
    ]
    buffer = RolloutBuffer.from_transitions(transitions)
    distribute_trajectory(buffer, 8, 2.0, kappa, n)
    expected = np.zeros(40)
    for t in range(0, 15):
        expected[t] = kappa ** abs(t - 8) * 2.0
    worst = float(np.max(np.abs(buffer.r_int - expected)))
    return _check("kappa_decay", worst == 0.0, f"max deviation {worst:.1e}, clipped at the flight end")


def check_visitation() -> SelfTestCheck:
    grid = VisitationGrid(10, 10, 5.0, 5.0)
    grid.add(np.array([[0.1, 0.1], [0.1, 0.1], [-4.9, 4.9]]))
    pixels = to_pixels(grid.normalized())
    ok = grid.total == 3 and pixels.max() == 255 and pixels[0, 0] == 128
    return _check("visitation", ok, f"total {grid.total}, max pixel {pixels.max()}")


def run_selftest(seed: int = 0) -> SelfTestResult:
    """Run every check and collect the results."""
    rng = np.random.default_rng(seed)
    runners: list[Callable[[], SelfTestCheck]] = [
        lambda: check_gradients(rng),
        lambda: check_gae(rng),
        lambda: check_clip(rng),
        check_physics,
        check_rewards,
        check_kappa_decay,
        check_visitation,
    ]
    checks = []
    for runner in runners:
        check = runner()
        logger.debug("%s: %s (%s)", check.name, "pass" if check.passed else "FAIL", check.detail)
        checks.append(check)

    passed = sum(c.passed for c in checks)
    versions = get_versions()
    return SelfTestResult(
        status="pass" if passed == len(checks) else "fail",
        checks=checks,
        summary=SelfTestSummary(total=len(checks), passed=passed, failed=len(checks) - passed),
        metadata=SelfTestMetadata(
            version=versions["curioflight"] or "unknown",
            python=versions["python"] or "unknown",
            numpy=versions["numpy"],
        ),
    )
