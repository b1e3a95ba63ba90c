"""Single-transition curiosity: inverse and forward dynamics on observations."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numpy.typing import NDArray

from curioflight.core import nn
from curioflight.core._logging import get_logger
from curioflight.core.env import ACTION_SIZE, OBSERVATION_SIZE
from curioflight.core.errors import NumericalError
from curioflight.core.models import CuriosityStats, IcmConfig
from curioflight.core.nn import MlpArch, MlpParams
from curioflight.core.ppo import RolloutBuffer

FloatArray = NDArray[np.float64]

logger = get_logger(__name__)


@dataclass(frozen=True)
class IcmBatch:
    """Rows of (s_t, a_t, s_t+1); actions are the squashed [-1, 1] commands."""

    obs: FloatArray
    actions: FloatArray
    next_obs: FloatArray

    def __len__(self) -> int:
        return len(self.obs)

    @classmethod
    def from_buffer(cls, buffer: RolloutBuffer) -> IcmBatch:
        n = buffer.size
        return cls(
            obs=buffer.obs[:n].copy(),
            actions=nn.squash(buffer.actions[:n]),
            next_obs=buffer.next_obs[:n].copy(),
        )

    def subset(self, idx) -> IcmBatch:
        return IcmBatch(obs=self.obs[idx], actions=self.actions[idx], next_obs=self.next_obs[idx])


@dataclass
class IcmNets:
    """Inverse net g(s_t, s_t+1) -> a_t and forward net f(s_t, a_t) -> s_t+1.

    Features are the normalized observations themselves.
    """

    inverse: MlpParams
    forward: MlpParams
    inverse_arch: MlpArch
    forward_arch: MlpArch
    beta: float
    eta: float

    @classmethod
    def create(
        cls,
        config: IcmConfig,
        rng: np.random.Generator,
        obs_size: int = OBSERVATION_SIZE,
        action_size: int = ACTION_SIZE,
    ) -> IcmNets:
        inverse_arch = MlpArch(2 * obs_size, tuple(config.hidden_sizes), action_size)
        forward_arch = MlpArch(obs_size + action_size, tuple(config.hidden_sizes), obs_size)
        return cls(
            inverse=nn.init_params(inverse_arch, rng),
            forward=nn.init_params(forward_arch, rng),
            inverse_arch=inverse_arch,
            forward_arch=forward_arch,
            beta=config.beta,
            eta=config.eta,
        )

    def networks(self) -> dict[str, MlpParams]:
        return {"inverse": self.inverse, "forward": self.forward}


def icm_rewards(nets: IcmNets, batch: IcmBatch) -> FloatArray:
    """Per-row ``(eta / 2) * ||f(s_t, a_t) - s_t+1||``."""
    predicted, _ = nn.forward(nets.forward, nets.forward_arch, np.concatenate([batch.obs, batch.actions], axis=1))
    return 0.5 * nets.eta * np.linalg.norm(predicted - batch.next_obs, axis=1)


def icm_reward(s_t, a_t, s_t1, nets: IcmNets) -> float:
    batch = IcmBatch(
        obs=np.atleast_2d(np.asarray(s_t, dtype=np.float64)),
        actions=np.atleast_2d(np.asarray(a_t, dtype=np.float64)),
        next_obs=np.atleast_2d(np.asarray(s_t1, dtype=np.float64)),
    )
    return float(icm_rewards(nets, batch)[0])


def icm_loss_and_grads(
    nets: IcmNets,
    batch: IcmBatch,
) -> tuple[tuple[float, float, float], dict[str, dict[str, FloatArray]]]:
    """Batch-mean ``(1 - beta) * L_I + beta * L_F`` with half squared-error terms.

    Returns:
        (inverse_loss, forward_loss, total_loss) and gradients per network.

    """
    size = len(batch)
    predicted_action, inverse_cache = nn.forward(
        nets.inverse, nets.inverse_arch, np.concatenate([batch.obs, batch.next_obs], axis=1),
    )
    predicted_next, forward_cache = nn.forward(
        nets.forward, nets.forward_arch, np.concatenate([batch.obs, batch.actions], axis=1),
    )
    inverse_error = predicted_action - batch.actions
    forward_error = predicted_next - batch.next_obs
    inverse_loss = 0.5 * float(np.sum(np.square(inverse_error))) / size
    forward_loss = 0.5 * float(np.sum(np.square(forward_error))) / size
    total = (1.0 - nets.beta) * inverse_loss + nets.beta * forward_loss

    inverse_grads, _ = nn.backward(
        nets.inverse, nets.inverse_arch, inverse_cache, (1.0 - nets.beta) * inverse_error / size,
    )
    forward_grads, _ = nn.backward(
        nets.forward, nets.forward_arch, forward_cache, nets.beta * forward_error / size,
    )
    return (inverse_loss, forward_loss, total), {"inverse": inverse_grads, "forward": forward_grads}


def icm_update(
    nets: IcmNets,
    batch: IcmBatch,
    lr: float,
    epochs: int = 1,
    minibatch_size: int | None = None,
    rng: np.random.Generator | None = None,
) -> CuriosityStats:
    """Adam steps on shuffled minibatches; a non-finite loss restores both nets."""
    if len(batch) == 0:
        raise ValueError("icm_update needs a nonempty batch")
    size = len(batch)
    step = minibatch_size or size
    snapshot = {name: params.copy() for name, params in nets.networks().items()}
    sums = np.zeros(3)
    count = 0

    for _ in range(epochs):
        order = rng.permutation(size) if rng is not None else np.arange(size)
        for start in range(0, size, step):
            try:
                losses, grads = icm_loss_and_grads(nets, batch.subset(order[start:start + step]))
                finite = all(math.isfinite(value) for value in losses)
            except NumericalError:
                finite = False
            if not finite:
                logger.warning("Non-finite ICM loss; restoring pre-update parameters")
                for name, params in nets.networks().items():
                    params.restore(snapshot[name])
                return CuriosityStats(kind="icm", samples=size, aborted_heads=[0])
            for name, params in nets.networks().items():
                nn.adam_step(params, grads[name], lr)
            sums += losses
            count += 1

    inverse_loss, forward_loss, total = sums / count
    return CuriosityStats(
        kind="icm",
        inverse_loss=float(inverse_loss),
        forward_loss=float(forward_loss),
        total_loss=float(total),
        samples=size,
    )


def assign_icm_rewards(buffer: RolloutBuffer, nets: IcmNets) -> IcmBatch:
    """Write one intrinsic reward per transition into ``buffer.r_int``."""
    batch = IcmBatch.from_buffer(buffer)
    buffer.r_int[:buffer.size] = icm_rewards(nets, batch)
    return batch
