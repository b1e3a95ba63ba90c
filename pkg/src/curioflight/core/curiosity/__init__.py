"""Intrinsic reward sources: single-transition ICM and the segment-level ensemble."""

from __future__ import annotations

from curioflight.core.curiosity.hcm import (
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
    head_reward_sr,
    head_reward_ss,
    make_bundles,
)
from curioflight.core.curiosity.icm import (
    IcmBatch,
    IcmNets,
    assign_icm_rewards,
    icm_reward,
    icm_rewards,
    icm_update,
)

__all__ = [
    "BundleBatch",
    "CuriosityEnsemble",
    "CuriosityHead",
    "IcmBatch",
    "IcmNets",
    "SegmentBundle",
    "assign_hcm_rewards",
    "assign_icm_rewards",
    "distribute_trajectory",
    "ensemble_reward",
    "ensemble_rewards",
    "f_wp",
    "hcm_update",
    "head_reward_sr",
    "head_reward_ss",
    "icm_reward",
    "icm_rewards",
    "icm_update",
    "make_bundles",
]
