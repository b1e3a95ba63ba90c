"""Tests for metrics files, aggregation and evaluation reports."""

from __future__ import annotations

import csv

import pytest

from curioflight.core.errors import CurioflightError
from curioflight.core.models import CuriosityStats, EvaluationReport, FlightOutcome, MetricsRow, UpdateStats
from curioflight.core.report import (
    METRICS_COLUMNS,
    UPDATE_STATS_COLUMNS,
    aggregate_runs,
    append_metrics_row,
    append_update_stats,
    generate_markdown_report,
    read_metrics,
    save_report,
    write_metrics_header,
    write_update_stats_header,
)


def make_row(batch: int, reward: float, failed: int = 0) -> MetricsRow:
    return MetricsRow(
        batch=batch, mean_r_ext=reward, mean_r_int=0.1, flights=4, failed_flights=failed,
        err_x=0.5, err_y=0.5, err_z=0.2, err_roll=0.01, err_pitch=0.02, err_yaw=0.3,
        goal_distance=1.0, obstacle_distance=2.0, policy_loss=-0.01, value_ext_loss=1.0,
        value_int_loss=0.1, entropy=5.0, curiosity_loss=0.4,
    )


def write_run(path, rewards):
    write_metrics_header(path)
    for batch, reward in enumerate(rewards):
        append_metrics_row(path, make_row(batch, reward, failed=batch))
    return path


def test_metrics_round_trip(tmp_path):
    path = write_run(tmp_path / "metrics.csv", [0.5, 1.25])
    rows = read_metrics(path)
    assert rows == [make_row(0, 0.5, 0), make_row(1, 1.25, 1)]


def test_metrics_header_is_checked(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("batch,reward\n0,1.0\n", encoding="utf-8")
    with pytest.raises(CurioflightError, match="header"):
        read_metrics(path)


def test_schema_version_is_checked(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics_header(path)
    append_metrics_row(path, make_row(0, 1.0).model_copy(update={"schema_version": 99}))
    with pytest.raises(CurioflightError, match="schema"):
        read_metrics(path)


def test_aggregate_min_max_mean(tmp_path):
    a = write_run(tmp_path / "a.csv", [1.0, 2.0, 3.0])
    b = write_run(tmp_path / "b.csv", [3.0, 4.0])
    out = tmp_path / "aggregate.csv"
    assert aggregate_runs([a, b], out) == 2

    with out.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert [row["batch"] for row in rows] == ["0", "1"]
    assert rows[0]["runs"] == "2"
    assert float(rows[0]["mean_r_ext_min"]) == 1.0
    assert float(rows[0]["mean_r_ext_max"]) == 3.0
    assert float(rows[1]["mean_r_ext_mean"]) == 3.0
    assert "batch_min" not in rows[0]


def test_aggregate_needs_files(tmp_path):
    with pytest.raises(CurioflightError):
        aggregate_runs([], tmp_path / "out.csv")


def test_update_stats_columns(tmp_path):
    path = tmp_path / "update_stats.csv"
    write_update_stats_header(path)
    curiosity = CuriosityStats(kind="hcm", total_loss=0.5, samples=12, aborted_heads=[3], head_losses=[0.5, 0.25])
    append_update_stats(path, 0, UpdateStats(policy_loss=0.1, minibatches=8), curiosity)

    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert list(rows[0]) == UPDATE_STATS_COLUMNS
    assert rows[0]["hcm_bundles"] == "12"
    assert rows[0]["hcm_aborted_heads"] == "1"
    assert rows[0]["hcm_head_losses"] == "0.5;0.25"
    assert rows[0]["icm_total_loss"] == "0.0"
    assert rows[0]["aborted"] == "false"


def test_metrics_columns_start_with_schema_and_batch():
    assert METRICS_COLUMNS[:2] == ["schema_version", "batch"]


def test_markdown_report(tmp_path):
    report = EvaluationReport(
        checkpoint="runs/x/checkpoints/batch_0009.npz", seed=2, episodes=1, reached_goal=0, crashes=1, timeouts=0,
        flights=[FlightOutcome(
            flight=0, outcome="crash", terminal_cause="obstacle_hit", steps=120,
            final_pose_error=[1.0, 0.5, 0.2, 0.0, 0.1, 0.3], final_goal_distance=1.2,
            min_obstacle_distance=0.3, total_reward=-4.5,
        )],
    )
    content = generate_markdown_report(report)
    assert "**Crashes:** 1" in content
    assert "`obstacle_hit`" in content
    assert "| 0 | crash |" in content

    path = tmp_path / "report.md"
    save_report(content, path)
    assert path.read_text(encoding="utf-8") == content


def test_markdown_report_without_flights():
    report = EvaluationReport(checkpoint="c.npz", seed=0, episodes=0, reached_goal=0, crashes=0, timeouts=0)
    assert "| - |" in generate_markdown_report(report)
