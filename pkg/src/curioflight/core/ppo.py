"""PPO with separate extrinsic and intrinsic value networks."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numpy.typing import NDArray

from curioflight.core import nn
from curioflight.core._logging import get_logger
from curioflight.core.env import ACTION_SIZE, OBSERVATION_SIZE
from curioflight.core.errors import NumericalError, ShapeError
from curioflight.core.models import PpoConfig, UpdateStats
from curioflight.core.nn import MlpArch, MlpParams, PolicyOutput

FloatArray = NDArray[np.float64]

logger = get_logger(__name__)


@dataclass
class Transition:
    obs: FloatArray
    action: FloatArray
    log_prob_old: float
    r_ext: float
    v_ext: float
    v_int: float
    terminal: bool
    flight_id: int
    r_int: float = 0.0
    next_obs: FloatArray | None = None
    position: FloatArray | None = None


class RolloutBuffer:
    """Column storage for one training batch.

    ``actions`` hold the raw (pre-squash) samples the log-probabilities refer
    to. ``last_v_ext``/``last_v_int`` bootstrap the step after the final
    transition when the batch ends mid-flight.
    """

    def __init__(self, capacity: int, obs_size: int = OBSERVATION_SIZE, action_size: int = ACTION_SIZE):
        if capacity <= 0:
            raise ValueError(f"capacity must be > 0, got {capacity}")
        self.capacity = capacity
        self.size = 0
        self.obs = np.zeros((capacity, obs_size))
        self.next_obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros((capacity, action_size))
        self.log_probs = np.zeros(capacity)
        self.r_ext = np.zeros(capacity)
        self.r_int = np.zeros(capacity)
        self.v_ext = np.zeros(capacity)
        self.v_int = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.flight_ids = np.zeros(capacity, dtype=np.int64)
        self.positions = np.zeros((capacity, 3))
        self.last_v_ext = 0.0
        self.last_v_int = 0.0
        self.advantages = np.zeros(capacity)
        self.adv_ext = np.zeros(capacity)
        self.adv_int = np.zeros(capacity)
        self.returns_ext = np.zeros(capacity)
        self.returns_int = np.zeros(capacity)

    def __len__(self) -> int:
        return self.size

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    def add(self, transition: Transition) -> None:
        if self.full:
            raise IndexError(f"RolloutBuffer is full ({self.capacity} transitions)")
        i = self.size
        self.obs[i] = transition.obs
        self.next_obs[i] = transition.obs if transition.next_obs is None else transition.next_obs
        self.actions[i] = transition.action
        self.log_probs[i] = transition.log_prob_old
        self.r_ext[i] = transition.r_ext
        self.r_int[i] = transition.r_int
        self.v_ext[i] = transition.v_ext
        self.v_int[i] = transition.v_int
        self.terminals[i] = transition.terminal
        self.flight_ids[i] = transition.flight_id
        if transition.position is not None:
            self.positions[i] = transition.position
        self.size += 1

    def __getitem__(self, index: int) -> Transition:
        if not 0 <= index < self.size:
            raise IndexError(index)
        return Transition(
            obs=self.obs[index].copy(),
            action=self.actions[index].copy(),
            log_prob_old=float(self.log_probs[index]),
            r_ext=float(self.r_ext[index]),
            r_int=float(self.r_int[index]),
            v_ext=float(self.v_ext[index]),
            v_int=float(self.v_int[index]),
            terminal=bool(self.terminals[index]),
            flight_id=int(self.flight_ids[index]),
            next_obs=self.next_obs[index].copy(),
            position=self.positions[index].copy(),
        )

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> RolloutBuffer:
        if not transitions:
            raise ValueError("at least one transition is required")
        buffer = cls(len(transitions), obs_size=len(transitions[0].obs), action_size=len(transitions[0].action))
        for transition in transitions:
            buffer.add(transition)
        return buffer


def _check_discounts(gamma: float, lam: float) -> None:
    if not (0 < gamma < 1 and 0 < lam < 1):
        raise ValueError(f"gamma and lam must lie in (0, 1), got gamma={gamma}, lam={lam}")


def compute_gae(rewards, values, terminals, gamma: float, lam: float) -> FloatArray:
    """Truncated generalized advantage estimation.

    Args:
        rewards: r_0 .. r_{T-1}.
        values: V(s_0) .. V(s_T); the last entry bootstraps the buffer end.
        terminals: True where the flight ended at that step (no bootstrap).
        gamma: Discount factor in (0, 1).
        lam: GAE lambda in (0, 1).

    Returns:
        Advantages, one per reward.

    """
    _check_discounts(gamma, lam)
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    if len(values) != len(rewards) + 1 or len(terminals) != len(rewards):
        raise ShapeError(
            f"compute_gae needs T rewards, T+1 values and T terminals; "
            f"got {len(rewards)}, {len(values)}, {len(terminals)}",
        )
    not_done = 1.0 - terminals
    deltas = rewards + gamma * values[1:] * not_done - values[:-1]
    return accumulate_advantages(deltas, terminals, gamma, lam)


def accumulate_advantages(deltas, terminals, gamma: float, lam: float) -> FloatArray:
    """Discounted (gamma * lam) suffix sums of deltas, cut after each terminal."""
    _check_discounts(gamma, lam)
    deltas = np.asarray(deltas, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    if len(terminals) != len(deltas):
        raise ShapeError(f"{len(deltas)} deltas but {len(terminals)} terminal flags")
    advantages = np.zeros_like(deltas)
    running = 0.0
    for t in reversed(range(len(deltas))):
        if terminals[t]:
            running = 0.0
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages


def combined_delta(r_ext, r_int, v_ext_t, v_ext_t1, v_int_t, v_int_t1, gamma: float, standard_td: bool = False):
    """TD residual over the summed extrinsic and intrinsic streams.

    The default form discounts the value differences as a whole,
    ``(r_ext + r_int) + gamma * ((v_ext_t1 - v_ext_t) + (v_int_t1 - v_int_t))``.
    ``standard_td`` gives ``(r_ext + r_int) + gamma * (v_ext_t1 + v_int_t1) - (v_ext_t + v_int_t)``.
    """
    reward = np.add(r_ext, r_int)
    if standard_td:
        return reward + gamma * (np.add(v_ext_t1, v_int_t1)) - np.add(v_ext_t, v_int_t)
    return reward + gamma * (np.subtract(v_ext_t1, v_ext_t) + np.subtract(v_int_t1, v_int_t))


def compute_advantages(buffer: RolloutBuffer, gamma: float, lam: float, standard_td: bool = False) -> None:
    """Fill policy advantages and per-head value targets in place."""
    n = buffer.size
    terminals = buffer.terminals[:n]
    not_done = 1.0 - terminals
    v_ext = np.append(buffer.v_ext[:n], buffer.last_v_ext)
    v_int = np.append(buffer.v_int[:n], buffer.last_v_int)

    deltas = combined_delta(
        buffer.r_ext[:n], buffer.r_int[:n],
        v_ext[:-1], v_ext[1:] * not_done,
        v_int[:-1], v_int[1:] * not_done,
        gamma, standard_td=standard_td,
    )
    buffer.advantages[:n] = accumulate_advantages(deltas, terminals, gamma, lam)
    buffer.adv_ext[:n] = compute_gae(buffer.r_ext[:n], v_ext, terminals, gamma, lam)
    buffer.adv_int[:n] = compute_gae(buffer.r_int[:n], v_int, terminals, gamma, lam)
    buffer.returns_ext[:n] = buffer.adv_ext[:n] + buffer.v_ext[:n]
    buffer.returns_int[:n] = buffer.adv_int[:n] + buffer.v_int[:n]


def clipped_surrogate(log_prob_new, log_prob_old, advantage, epsilon: float):
    """Pessimistic PPO objective ``min(r * A, clip(r, 1 - eps, 1 + eps) * A)`` (to maximize)."""
    ratio = np.exp(np.subtract(log_prob_new, log_prob_old))
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage)


@dataclass
class ActorCritic:
    """Gaussian policy plus extrinsic and intrinsic value networks."""

    policy: MlpParams
    value_ext: MlpParams
    value_int: MlpParams
    policy_arch: MlpArch
    value_arch: MlpArch

    @classmethod
    def create(cls, config: PpoConfig, rng: np.random.Generator) -> ActorCritic:
        policy_arch = nn.policy_arch(config.hidden_sizes)
        value_arch = nn.value_arch(config.hidden_sizes)
        return cls(
            policy=nn.init_params(policy_arch, rng, log_std=config.init_log_std),
            value_ext=nn.init_params(value_arch, rng),
            value_int=nn.init_params(value_arch, rng),
            policy_arch=policy_arch,
            value_arch=value_arch,
        )

    def networks(self) -> dict[str, MlpParams]:
        return {"policy": self.policy, "value_ext": self.value_ext, "value_int": self.value_int}

    def distribution(self, obs) -> PolicyOutput:
        return nn.forward_policy(self.policy, self.policy_arch, obs)

    def values(self, obs) -> nn.ValueHeads:
        return nn.forward_values(self.value_ext, self.value_int, self.value_arch, obs)

    def act(self, obs, rng: np.random.Generator) -> tuple[FloatArray, float, float, float]:
        """Sample a raw action; returns (raw_action, log_prob, v_ext, v_int)."""
        out = self.distribution(obs)
        raw = nn.sample_action(out, rng)
        log_prob, _ = nn.log_prob_and_entropy(out, raw)
        heads = self.values(obs)
        return raw, float(log_prob), float(heads.v_ext), float(heads.v_int)

    def act_deterministic(self, obs) -> FloatArray:
        return self.distribution(obs).action_mean


@dataclass(frozen=True)
class LossParts:
    policy_loss: float
    value_ext_loss: float
    value_int_loss: float
    entropy: float
    total: float
    mean_ratio: float
    clip_fraction: float
    approx_kl: float


def ppo_loss_and_grads(
    agent: ActorCritic,
    obs: FloatArray,
    actions: FloatArray,
    log_probs_old: FloatArray,
    advantages: FloatArray,
    returns_ext: FloatArray,
    returns_int: FloatArray,
    config: PpoConfig,
) -> tuple[LossParts, dict[str, dict[str, FloatArray]]]:
    """Minibatch loss ``-L_clip + c1 * L_vf_ext + value_int_coef * L_vf_int - c2 * S`` and its gradients.

    Returns:
        Loss breakdown and gradients keyed by network name then tensor name.

    """
    batch = len(obs)
    mean, policy_cache = nn.forward(agent.policy, agent.policy_arch, obs)
    out = PolicyOutput(action_mean=mean, log_std=nn.clamped_log_std(agent.policy))
    log_probs, entropy = nn.log_prob_and_entropy(out, actions)

    ratio = np.exp(log_probs - log_probs_old)
    eps = config.clip_epsilon
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))

    v_ext, ext_cache = nn.forward(agent.value_ext, agent.value_arch, obs)
    v_int, int_cache = nn.forward(agent.value_int, agent.value_arch, obs)
    err_ext = v_ext[:, 0] - returns_ext
    err_int = v_int[:, 0] - returns_int
    value_ext_loss = float(np.mean(np.square(err_ext)))
    value_int_loss = float(np.mean(np.square(err_int)))

    total = (
        policy_loss
        + config.c1 * value_ext_loss
        + config.value_int_coef * value_int_loss
        - config.c2 * entropy
    )

    # d(-mean(min(...)))/d log_prob; the clipped branch carries no gradient
    active = unclipped <= clipped
    grad_log_prob = -(advantages * ratio * active) / batch
    grad_mean_lp, grad_log_std_lp = nn.gaussian_log_prob_grads(out, actions)
    policy_grads, _ = nn.backward(agent.policy, agent.policy_arch, policy_cache, grad_log_prob[:, None] * grad_mean_lp)
    log_std = agent.policy["log_std"]
    in_range = (log_std >= nn.LOG_STD_MIN) & (log_std <= nn.LOG_STD_MAX)
    policy_grads["log_std"] = (grad_log_prob @ grad_log_std_lp - config.c2) * in_range

    ext_grads, _ = nn.backward(
        agent.value_ext, agent.value_arch, ext_cache, (config.c1 * 2.0 * err_ext / batch)[:, None],
    )
    int_grads, _ = nn.backward(
        agent.value_int, agent.value_arch, int_cache, (config.value_int_coef * 2.0 * err_int / batch)[:, None],
    )

    parts = LossParts(
        policy_loss=policy_loss,
        value_ext_loss=value_ext_loss,
        value_int_loss=value_int_loss,
        entropy=entropy,
        total=total,
        mean_ratio=float(np.mean(ratio)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        approx_kl=float(np.mean(log_probs_old - log_probs)),
    )
    return parts, {"policy": policy_grads, "value_ext": ext_grads, "value_int": int_grads}


def ppo_update(
    buffer: RolloutBuffer,
    agent: ActorCritic,
    config: PpoConfig,
    rng: np.random.Generator,
) -> UpdateStats:
    """Run ``config.epochs`` passes of shuffled minibatch updates over a filled buffer.

    Advantages and returns must already be computed. A non-finite loss
    restores every network to its state before the update.
    """
    n = buffer.size
    advantages = buffer.advantages[:n].copy()
    if config.normalize_advantages and n > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    snapshot = {name: params.copy() for name, params in agent.networks().items()}
    lrs = {"policy": config.lr_policy, "value_ext": config.lr_value_ext, "value_int": config.lr_value_int}
    totals: dict[str, float] = dict.fromkeys(LossParts.__dataclass_fields__, 0.0)
    minibatches = 0

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            try:
                parts, grads = ppo_loss_and_grads(
                    agent,
                    buffer.obs[idx],
                    buffer.actions[idx],
                    buffer.log_probs[idx],
                    advantages[idx],
                    buffer.returns_ext[idx],
                    buffer.returns_int[idx],
                    config,
                )
                finite = math.isfinite(parts.total)
            except NumericalError:
                finite = False
            if not finite:
                logger.warning(
                    "Non-finite PPO loss in epoch %d, minibatch %d; restoring pre-update parameters",
                    epoch, start // config.minibatch_size,
                )
                for name, params in agent.networks().items():
                    params.restore(snapshot[name])
                return UpdateStats(aborted=True, minibatches=minibatches)

            for name, params in agent.networks().items():
                nn.adam_step(
                    params, grads[name], lrs[name],
                    config.adam_beta1, config.adam_beta2, config.adam_eps,
                )
            for key in totals:
                totals[key] += getattr(parts, key)
            minibatches += 1

    means = {key: value / minibatches for key, value in totals.items()}
    return UpdateStats(
        policy_loss=means["policy_loss"],
        value_ext_loss=means["value_ext_loss"],
        value_int_loss=means["value_int_loss"],
        entropy=means["entropy"],
        mean_ratio=means["mean_ratio"],
        clip_fraction=means["clip_fraction"],
        approx_kl=means["approx_kl"],
        total_loss=means["total"],
        minibatches=minibatches,
    )
