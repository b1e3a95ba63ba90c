#!/usr/bin/env python3
"""Scaled-down smoke experiment: does PPO+HCM learn on the simplified task?"""

from __future__ import annotations

import json
from pathlib import Path
import sys
import time

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from curioflight.core.config import parse_config_text
from curioflight.core.pipeline import train
from curioflight.core.report import read_metrics

WINDOW = 5

BENCHMARK_CASES = {
    "ppo_hcm_simplified": {
        "config": """
run.algorithm = ppo_hcm
run.seed = 0
run.total_batches = 50
run.checkpoint_interval = 25
env.obstacle_count = 0
env.init_position_range = 0.2
env.init_attitude_range = 0.05
ppo.batch_size = 4096
ppo.minibatch_size = 512
""",
        "description": "No obstacles, small spawn range, 4096-step batches, 50 batches",
    },
}


def run_benchmark(out_dir: Path) -> dict:
    results = {"total": len(BENCHMARK_CASES), "passed": 0, "failed": 0, "cases": []}

    for name, case in BENCHMARK_CASES.items():
        config = parse_config_text(case["config"], source=name)
        start = time.time()
        summary = train(config, out_dir / name)
        elapsed = time.time() - start

        rows = read_metrics(summary.metrics_csv)
        first, last = rows[:WINDOW], rows[-WINDOW:]
        reward_first = sum(r.mean_r_ext for r in first) / len(first)
        reward_last = sum(r.mean_r_ext for r in last) / len(last)
        failed_first = sum(r.failed_flights for r in first) / len(first)
        failed_last = sum(r.failed_flights for r in last) / len(last)
        case_passed = reward_last > reward_first and failed_last < failed_first

        results["passed" if case_passed else "failed"] += 1
        results["cases"].append(
            {
                "name": name,
                "description": case["description"],
                "reward_first": reward_first,
                "reward_last": reward_last,
                "failed_first": failed_first,
                "failed_last": failed_last,
                "elapsed_s": round(elapsed, 1),
                "passed": case_passed,
            }
        )

    return results


if __name__ == "__main__":
    benchmark_dir = Path(__file__).parent
    results = run_benchmark(benchmark_dir / "runs")

    print("\n" + "=" * 60)
    print("CURIOFLIGHT SMOKE EXPERIMENT")
    print("=" * 60)
    print(f"Total: {results['total']}")
    print(f"Passed: {results['passed']}")
    print(f"Failed: {results['failed']}")

    print("\nDetailed Results:")
    print("-" * 60)
    for case in results["cases"]:
        status = "✓" if case["passed"] else "✗"
        print(f"{status} {case['name']}: {case['elapsed_s']}s")
        print(f"  mean r_ext  first {WINDOW}: {case['reward_first']:.4f}  last {WINDOW}: {case['reward_last']:.4f}")
        print(f"  failed/batch first {WINDOW}: {case['failed_first']:.1f}  last {WINDOW}: {case['failed_last']:.1f}")

    print("=" * 60)

    with open(benchmark_dir / "results.json", "w") as f:
        json.dump(results, f, indent=2)

    print(f"\nResults saved to {benchmark_dir / 'results.json'}")
