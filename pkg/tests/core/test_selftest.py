from __future__ import annotations

import numpy as np

from curioflight.core.selftest import brute_force_gae, run_selftest


def test_selftest_passes():
    result = run_selftest()
    assert result.status == "pass", [c for c in result.checks if not c.passed]
    assert result.summary.total == len(result.checks) == 7
    assert {c.name for c in result.checks} == {
        "gradients", "gae_oracle", "clip_semantics", "physics", "rewards", "kappa_decay", "visitation",
    }


def test_brute_force_gae_by_hand():
    advantages = brute_force_gae([1.0, 1.0], [0.0, 0.0, 0.0], [False, True], 0.5, 0.5)
    assert np.allclose(advantages, [1.25, 1.0])
