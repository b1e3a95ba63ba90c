"""Metrics CSV files, multi-seed aggregation and evaluation reports."""

from __future__ import annotations

import csv
from pathlib import Path

from curioflight.core.errors import CurioflightError
from curioflight.core.models import (
    METRICS_SCHEMA_VERSION,
    CuriosityStats,
    EvaluationReport,
    MetricsRow,
    UpdateStats,
)

METRICS_COLUMNS = list(MetricsRow.model_fields)
AGGREGATED_COLUMNS = [name for name in METRICS_COLUMNS if name not in ("schema_version", "batch")]
UPDATE_STATS_COLUMNS = [
    "batch",
    *UpdateStats.model_fields,
    "icm_inverse_loss",
    "icm_forward_loss",
    "icm_total_loss",
    "hcm_total_loss",
    "hcm_mean_reward",
    "hcm_bundles",
    "hcm_aborted_heads",
    "hcm_head_losses",
]


def _format(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_header(path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerow(METRICS_COLUMNS)


def append_metrics_row(path: Path, row: MetricsRow) -> None:
    values = row.model_dump()
    with path.open("a", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerow([_format(values[name]) for name in METRICS_COLUMNS])


def read_metrics(path: Path) -> list[MetricsRow]:
    """Parse a metrics CSV, checking header and schema version."""
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != METRICS_COLUMNS:
            raise CurioflightError(f"{path}: unexpected metrics header {reader.fieldnames}")
        rows = [MetricsRow.model_validate(record) for record in reader]
    for row in rows:
        if row.schema_version != METRICS_SCHEMA_VERSION:
            raise CurioflightError(f"{path}: metrics schema {row.schema_version}, expected {METRICS_SCHEMA_VERSION}")
    return rows


def write_update_stats_header(path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerow(UPDATE_STATS_COLUMNS)


def append_update_stats(path: Path, batch: int, stats: UpdateStats, curiosity: CuriosityStats) -> None:
    """One row of PPO diagnostics with ``icm_*`` and ``hcm_*`` curiosity columns."""
    icm = curiosity if curiosity.kind == "icm" else CuriosityStats()
    hcm = curiosity if curiosity.kind == "hcm" else CuriosityStats()
    row = {
        "batch": batch,
        **stats.model_dump(),
        "icm_inverse_loss": icm.inverse_loss,
        "icm_forward_loss": icm.forward_loss,
        "icm_total_loss": icm.total_loss,
        "hcm_total_loss": hcm.total_loss,
        "hcm_mean_reward": hcm.mean_reward,
        "hcm_bundles": hcm.samples,
        "hcm_aborted_heads": len(hcm.aborted_heads),
        "hcm_head_losses": ";".join(repr(loss) for loss in hcm.head_losses),
    }
    with path.open("a", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerow([_format(row[name]) for name in UPDATE_STATS_COLUMNS])


def aggregate_runs(paths: list[Path], out: Path) -> int:
    """Per-batch min/max/mean of every metric across runs (the multi-seed bands).

    Args:
        paths: Metrics CSVs, one per seed.
        out: Aggregate CSV to write.

    Returns:
        Number of batches written; only batches present in every run are kept.

    """
    if not paths:
        raise CurioflightError("aggregate_runs needs at least one metrics file")
    runs = [{row.batch: row for row in read_metrics(path)} for path in paths]
    batches = sorted(set.intersection(*(set(run) for run in runs)))

    header = ["batch", "runs"]
    for name in AGGREGATED_COLUMNS:
        header.extend([f"{name}_min", f"{name}_max", f"{name}_mean"])

    with out.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for batch in batches:
            record: list[str] = [str(batch), str(len(runs))]
            for name in AGGREGATED_COLUMNS:
                values = [float(getattr(run[batch], name)) for run in runs]
                record.extend(_format(v) for v in (min(values), max(values), sum(values) / len(values)))
            writer.writerow(record)
    return len(batches)


def generate_markdown_report(report: EvaluationReport) -> str:
    """Render an evaluation report as Markdown.

    Args:
        report: Result of evaluate().

    Returns:
        Markdown string
    """
    rows = ""
    for flight in report.flights:
        errors = ", ".join(f"{e:.3f}" for e in flight.final_pose_error)
        rows += (
            f"| {flight.flight} | {flight.outcome} | `{flight.terminal_cause}` | {flight.steps} "
            f"| {flight.final_goal_distance:.3f} | {flight.min_obstacle_distance:.3f} "
            f"| {flight.total_reward:.2f} | {errors} |\n"
        )
    if not rows:
        rows = "| - | - | - | - | - | - | - | - |\n"

    return f"""# Evaluation Report

**Checkpoint:** `{report.checkpoint}`
**Seed:** {report.seed}

---

## Summary

- **Flights:** {report.episodes}
- **Reached goal:** {report.reached_goal}
- **Crashes:** {report.crashes}
- **Timeouts:** {report.timeouts}

## Flights

| Flight | Outcome | Cause | Steps | Goal dist [m] | Min obstacle dist [m] | Reward | Final pose errors |
|--------|---------|-------|-------|---------------|-----------------------|--------|-------------------|
{rows}"""


def save_report(content: str, output_path: Path) -> None:
    output_path.write_text(content, encoding="utf-8")
