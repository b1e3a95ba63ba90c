"""Segment-level curiosity ensemble.

Each bundle is anchored at step t and holds the observations over [t-n, t]
(past) and [t, t+n] (future), the vehicle positions over [t-n, t+n] and the
extrinsic rewards over [t, t+n]. Two head types score a bundle:

- state-state (SS): predict the window waypoints from past and future
  observations, and the future observations from past observations plus
  waypoints;
- state-reward (SR): predict the waypoints from past observations and future
  rewards, and the future rewards from past observations plus waypoints.

A head's curiosity for a bundle is its own training loss on that bundle. The
ensemble reward is the scaled mean over all heads and is spread back over the
anchor's neighbourhood with a geometric decay.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from curioflight.core import nn
from curioflight.core._logging import get_logger
from curioflight.core.env import OBSERVATION_SIZE
from curioflight.core.errors import NumericalError
from curioflight.core.models import CuriosityStats, HcmConfig
from curioflight.core.nn import MlpArch, MlpParams
from curioflight.core.ppo import RolloutBuffer

FloatArray = NDArray[np.float64]
HeadKind = Literal["ss", "sr"]
WAYPOINT_SIZE = 9

logger = get_logger(__name__)


@dataclass(frozen=True)
class SegmentBundle:
    zeta_past: FloatArray
    zeta_future: FloatArray
    positions: FloatArray
    gamma_future: FloatArray
    anchor: int


@dataclass(frozen=True)
class BundleBatch:
    """Stacked bundles: past/future (B, n+1, obs), positions (B, 2n+1, 3), rewards (B, n+1)."""

    past: FloatArray
    future: FloatArray
    positions: FloatArray
    rewards: FloatArray
    anchors: NDArray[np.int64]

    def __len__(self) -> int:
        return len(self.anchors)

    def subset(self, idx) -> BundleBatch:
        return BundleBatch(
            past=self.past[idx],
            future=self.future[idx],
            positions=self.positions[idx],
            rewards=self.rewards[idx],
            anchors=self.anchors[idx],
        )

    @classmethod
    def stack(cls, bundles: list[SegmentBundle]) -> BundleBatch:
        if not bundles:
            raise ValueError("cannot stack an empty bundle list")
        return cls(
            past=np.stack([b.zeta_past for b in bundles]),
            future=np.stack([b.zeta_future for b in bundles]),
            positions=np.stack([b.positions for b in bundles]),
            rewards=np.stack([b.gamma_future for b in bundles]),
            anchors=np.array([b.anchor for b in bundles], dtype=np.int64),
        )


def _window_is_one_flight(buffer: RolloutBuffer, start: int, end: int) -> bool:
    """True when [start, end] lies in one flight; a terminal is allowed only at ``end``."""
    ids = buffer.flight_ids[start:end + 1]
    if np.any(ids != ids[0]):
        return False
    return not np.any(buffer.terminals[start:end])


def make_bundles(buffer: RolloutBuffer, n: int, stride: int) -> list[SegmentBundle]:
    """Bundles anchored at n, n + stride, ... whose whole window stays in one flight."""
    bundles = []
    for anchor in range(n, buffer.size - n, stride):
        start, end = anchor - n, anchor + n
        if not _window_is_one_flight(buffer, start, end):
            continue
        bundles.append(SegmentBundle(
            zeta_past=buffer.obs[start:anchor + 1].copy(),
            zeta_future=buffer.obs[anchor:end + 1].copy(),
            positions=buffer.positions[start:end + 1].copy(),
            gamma_future=buffer.r_ext[anchor:end + 1].copy(),
            anchor=anchor,
        ))
    return bundles


def f_wp(positions) -> FloatArray:
    """Waypoints (quarter, middle, end of the window) relative to its first position.

    Accepts one window (2n+1, 3) -> (3, 3) or a stack (B, 2n+1, 3) -> (B, 3, 3).
    """
    positions = np.asarray(positions, dtype=np.float64)
    length = positions.shape[-2]
    if length == 0:
        raise ValueError("f_wp needs a nonempty window")
    n = (length - 1) // 2
    quarter = math.ceil(2 * n / 4)
    origin = positions[..., 0, :]
    return np.stack(
        [positions[..., quarter, :] - origin, positions[..., n, :] - origin, positions[..., 2 * n, :] - origin],
        axis=-2,
    )


@dataclass
class CuriosityHead:
    """One inverse/forward pair; owns a shuffling RNG seeded like its weights."""

    kind: HeadKind
    inverse: MlpParams
    forward: MlpParams
    inverse_arch: MlpArch
    forward_arch: MlpArch
    rng: np.random.Generator
    seed: int

    @classmethod
    def create(
        cls,
        kind: HeadKind,
        config: HcmConfig,
        seed: int,
        obs_size: int = OBSERVATION_SIZE,
    ) -> CuriosityHead:
        segment = config.segment_length + 1
        past_size = segment * obs_size
        hidden = tuple(config.hidden_sizes)
        if kind == "ss":
            inverse_arch = MlpArch(2 * past_size, hidden, WAYPOINT_SIZE)
            forward_arch = MlpArch(past_size + WAYPOINT_SIZE, hidden, past_size)
        else:
            inverse_arch = MlpArch(past_size + segment, hidden, WAYPOINT_SIZE)
            forward_arch = MlpArch(past_size + WAYPOINT_SIZE, hidden, segment)
        init_rng = np.random.default_rng(seed)
        return cls(
            kind=kind,
            inverse=nn.init_params(inverse_arch, init_rng),
            forward=nn.init_params(forward_arch, init_rng),
            inverse_arch=inverse_arch,
            forward_arch=forward_arch,
            rng=np.random.default_rng([seed, 1]),
            seed=seed,
        )

    def networks(self) -> dict[str, MlpParams]:
        return {"inverse": self.inverse, "forward": self.forward}

    def inputs(self, batch: BundleBatch) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """(inverse input, waypoint target, forward input, forward target)."""
        size = len(batch)
        past = batch.past.reshape(size, -1)
        waypoints = f_wp(batch.positions).reshape(size, -1)
        if self.kind == "ss":
            future = batch.future.reshape(size, -1)
            inverse_in = np.concatenate([past, future], axis=1)
            target = future
        else:
            inverse_in = np.concatenate([past, batch.rewards], axis=1)
            target = batch.rewards
        return inverse_in, waypoints, np.concatenate([past, waypoints], axis=1), target

    def evaluate(self, batch: BundleBatch, beta: float) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Per-bundle (r_C, L_I, L_F)."""
        inverse_in, waypoints, forward_in, target = self.inputs(batch)
        predicted_wp, _ = nn.forward(self.inverse, self.inverse_arch, inverse_in)
        predicted, _ = nn.forward(self.forward, self.forward_arch, forward_in)
        inverse_loss = 0.5 * np.sum(np.square(predicted_wp - waypoints), axis=1)
        forward_loss = 0.5 * np.sum(np.square(predicted - target), axis=1)
        return (1.0 - beta) * inverse_loss + beta * forward_loss, inverse_loss, forward_loss

    def loss_and_grads(
        self,
        batch: BundleBatch,
        beta: float,
    ) -> tuple[tuple[float, float, float], dict[str, dict[str, FloatArray]]]:
        """Batch-mean head loss and gradients per network."""
        size = len(batch)
        inverse_in, waypoints, forward_in, target = self.inputs(batch)
        predicted_wp, inverse_cache = nn.forward(self.inverse, self.inverse_arch, inverse_in)
        predicted, forward_cache = nn.forward(self.forward, self.forward_arch, forward_in)
        inverse_error = predicted_wp - waypoints
        forward_error = predicted - target
        inverse_loss = 0.5 * float(np.sum(np.square(inverse_error))) / size
        forward_loss = 0.5 * float(np.sum(np.square(forward_error))) / size
        total = (1.0 - beta) * inverse_loss + beta * forward_loss

        inverse_grads, _ = nn.backward(
            self.inverse, self.inverse_arch, inverse_cache, (1.0 - beta) * inverse_error / size,
        )
        forward_grads, _ = nn.backward(
            self.forward, self.forward_arch, forward_cache, beta * forward_error / size,
        )
        return (inverse_loss, forward_loss, total), {"inverse": inverse_grads, "forward": forward_grads}

    def train(self, batch: BundleBatch, beta: float, lr: float, epochs: int, minibatch_size: int) -> float | None:
        """Train on the batch; returns the mean loss, or None after a non-finite loss (weights restored)."""
        snapshot = {name: params.copy() for name, params in self.networks().items()}
        size = len(batch)
        losses = []
        for _ in range(epochs):
            order = self.rng.permutation(size)
            for start in range(0, size, minibatch_size):
                try:
                    (_, _, total), grads = self.loss_and_grads(batch.subset(order[start:start + minibatch_size]), beta)
                except NumericalError:
                    total = math.nan
                if not math.isfinite(total):
                    for name, params in self.networks().items():
                        params.restore(snapshot[name])
                    return None
                for name, params in self.networks().items():
                    nn.adam_step(params, grads[name], lr)
                losses.append(total)
        return float(np.mean(losses))


def head_reward_ss(bundle: SegmentBundle, head: CuriosityHead, beta: float) -> tuple[float, float, float]:
    if head.kind != "ss":
        raise ValueError(f"head_reward_ss needs an 'ss' head, got '{head.kind}'")
    r_c, inverse_loss, forward_loss = head.evaluate(BundleBatch.stack([bundle]), beta)
    return float(r_c[0]), float(inverse_loss[0]), float(forward_loss[0])


def head_reward_sr(bundle: SegmentBundle, head: CuriosityHead, beta: float) -> tuple[float, float, float]:
    if head.kind != "sr":
        raise ValueError(f"head_reward_sr needs an 'sr' head, got '{head.kind}'")
    r_c, inverse_loss, forward_loss = head.evaluate(BundleBatch.stack([bundle]), beta)
    return float(r_c[0]), float(inverse_loss[0]), float(forward_loss[0])


@dataclass
class CuriosityEnsemble:
    heads: list[CuriosityHead]
    beta: float
    alpha_curiosity: float
    kappa: float
    segment_length: int
    stride: int

    @classmethod
    def create(
        cls,
        config: HcmConfig,
        rng: np.random.Generator,
        obs_size: int = OBSERVATION_SIZE,
    ) -> CuriosityEnsemble:
        """``heads_per_type`` SS heads followed by as many SR heads, each with its own seed."""
        seeds = rng.integers(0, 2**31 - 1, size=2 * config.heads_per_type)
        kinds: list[HeadKind] = ["ss"] * config.heads_per_type + ["sr"] * config.heads_per_type
        return cls(
            heads=[CuriosityHead.create(kind, config, int(seed), obs_size) for kind, seed in zip(kinds, seeds)],
            beta=config.beta,
            alpha_curiosity=config.alpha_curiosity,
            kappa=config.kappa,
            segment_length=config.segment_length,
            stride=config.stride,
        )

    def head_rewards(self, batch: BundleBatch) -> FloatArray:
        """(heads, bundles) matrix of per-head curiosity."""
        return np.stack([head.evaluate(batch, self.beta)[0] for head in self.heads])


def ensemble_rewards(batch: BundleBatch, ensemble: CuriosityEnsemble) -> FloatArray:
    return ensemble.alpha_curiosity * np.mean(ensemble.head_rewards(batch), axis=0)


def ensemble_reward(bundle: SegmentBundle, ensemble: CuriosityEnsemble) -> float:
    return float(ensemble_rewards(BundleBatch.stack([bundle]), ensemble)[0])


def distribute_trajectory(buffer: RolloutBuffer, anchor_t: int, r_curiosity: float, kappa: float, n: int) -> None:
    """Add ``kappa**x * r_curiosity`` to r_int at anchor_t +- x for x = 0..n.

    Each direction stops at the buffer ends and at the anchor's flight boundary.
    """
    if not 0 <= anchor_t < buffer.size:
        raise IndexError(f"anchor {anchor_t} outside buffer of size {buffer.size}")
    if not 0 < kappa < 1:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    flight = buffer.flight_ids[anchor_t]
    buffer.r_int[anchor_t] += r_curiosity

    for x in range(1, n + 1):
        t = anchor_t + x
        if t >= buffer.size or buffer.flight_ids[t] != flight or buffer.terminals[t - 1]:
            break
        buffer.r_int[t] += kappa ** x * r_curiosity
    for x in range(1, n + 1):
        t = anchor_t - x
        if t < 0 or buffer.flight_ids[t] != flight or buffer.terminals[t]:
            break
        buffer.r_int[t] += kappa ** x * r_curiosity


def assign_hcm_rewards(buffer: RolloutBuffer, ensemble: CuriosityEnsemble) -> BundleBatch | None:
    """Score every bundle and spread its reward over the buffer; returns the bundles."""
    bundles = make_bundles(buffer, ensemble.segment_length, ensemble.stride)
    if not bundles:
        logger.warning("No flight in this batch is long enough for a curiosity bundle")
        return None
    batch = BundleBatch.stack(bundles)
    for anchor, reward in zip(batch.anchors, ensemble_rewards(batch, ensemble)):
        distribute_trajectory(buffer, int(anchor), float(reward), ensemble.kappa, ensemble.segment_length)
    return batch


def hcm_update(
    batch: BundleBatch,
    ensemble: CuriosityEnsemble,
    lr: float,
    epochs: int = 1,
    minibatch_size: int = 256,
) -> CuriosityStats:
    """Train each head on its own loss; a head with a non-finite loss is restored and skipped."""
    if len(batch) == 0:
        raise ValueError("hcm_update needs at least one bundle")
    head_losses: list[float] = []
    aborted: list[int] = []
    for index, head in enumerate(ensemble.heads):
        loss = head.train(batch, ensemble.beta, lr, epochs, minibatch_size)
        if loss is None:
            logger.warning("Non-finite loss in curiosity head %d (%s); restored", index, head.kind)
            aborted.append(index)
            head_losses.append(math.nan)
        else:
            head_losses.append(loss)

    finite = [loss for loss in head_losses if math.isfinite(loss)]
    mean_loss = float(np.mean(finite)) if finite else math.nan
    return CuriosityStats(
        kind="hcm",
        total_loss=mean_loss,
        samples=len(batch),
        aborted_heads=aborted,
        head_losses=head_losses,
    )
