from __future__ import annotations

import logging
from pathlib import Path
import sys
from typing import Annotated, NoReturn

import orjson
from rich.console import Console
from rich.table import Table
from rich.text import Text
import typer

from curioflight.core._logging import configure_logging
from curioflight.core._metadata import get_versions
from curioflight.core.config import apply_overrides, load_config
from curioflight.core.errors import ConfigError, CurioflightError
from curioflight.core.evaluation import evaluate
from curioflight.core.models import RunConfig
from curioflight.core.pipeline import train as run_training
from curioflight.core.report import aggregate_runs, generate_markdown_report, save_report
from curioflight.core.selftest import run_selftest
from curioflight.core.visitation import Normalization, VisitationGrid, render_grid

EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _click_error(name: str) -> type[Exception]:
    """Exception class from the click build typer runs on (installed or vendored)."""
    return next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == name)


UsageError = _click_error("UsageError")

app = typer.Typer(
    name="curioflight",
    help="Curiosity-driven PPO for low-level quadrotor control",
    no_args_is_help=True,
)
console = Console()


def _fail(message: str, code: int) -> NoReturn:
    console.print(Text.assemble(("Error: ", "bold red"), message), soft_wrap=True)
    raise typer.Exit(code=code)


def _handle(error: Exception) -> NoReturn:
    if isinstance(error, ConfigError):
        _fail(str(error), EXIT_USAGE)
    _fail(str(error), EXIT_RUNTIME)


@app.callback()
def _main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
) -> None:
    configure_logging(logging.DEBUG if verbose else logging.INFO)


@app.command()
def train(
    config: Annotated[
        Path | None,
        typer.Option("--config", "-c", help="Run configuration (section.key = value lines)"),
    ] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Override run.seed")] = None,
    out: Annotated[Path | None, typer.Option("--out", help="Override run.output_dir")] = None,
) -> None:
    """Train a policy and write metrics, grids and checkpoints."""
    try:
        run_config = load_config(config) if config else RunConfig()
        run_config = apply_overrides(run_config, seed=seed, output_dir=str(out) if out else None)
        summary = run_training(run_config)
    except (CurioflightError, OSError) as e:
        _handle(e)

    table = Table(title=f"Training finished ({run_config.algorithm}, seed {run_config.seed})")
    table.add_column("Artifact", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Batches", str(summary.batches))
    table.add_row("Metrics", str(summary.metrics_csv))
    table.add_row("Checkpoints", str(len(summary.checkpoints)))
    table.add_row("Grid snapshots", str(len(summary.grid_snapshots)))
    console.print(table)


@app.command("eval")
def eval_command(
    checkpoint: Annotated[Path, typer.Option("--checkpoint", help="Checkpoint (.npz) to evaluate")],
    episodes: Annotated[int, typer.Option("--episodes", min=1, help="Number of flights")] = 10,
    seed: Annotated[int, typer.Option("--seed", help="Evaluation seed")] = 0,
    config: Annotated[
        Path | None,
        typer.Option("--config", "-c", help="Use this configuration instead of the stored one"),
    ] = None,
    out: Annotated[Path | None, typer.Option("--out", help="Directory for trajectory CSVs")] = None,
    json_output: Annotated[bool, typer.Option("--json", "-j", help="Output JSON instead of a table")] = False,
    report: Annotated[Path | None, typer.Option("--report", "-r", help="Write a Markdown report")] = None,
) -> None:
    """Fly the deterministic policy of a checkpoint."""
    try:
        run_config = load_config(config) if config else None
        result = evaluate(checkpoint, episodes, seed=seed, config=run_config, trajectory_dir=out)
        if report:
            save_report(generate_markdown_report(result), report)
    except (CurioflightError, OSError) as e:
        _handle(e)

    if json_output:
        console.print(orjson.dumps(result.model_dump(), option=orjson.OPT_INDENT_2).decode(), soft_wrap=True)
        return

    table = Table(title=f"Evaluation of {checkpoint}")
    table.add_column("Flight", style="cyan")
    table.add_column("Outcome", style="yellow")
    table.add_column("Cause")
    table.add_column("Steps", justify="right")
    table.add_column("Goal dist [m]", justify="right")
    table.add_column("Reward", justify="right")
    for flight in result.flights:
        table.add_row(
            str(flight.flight),
            flight.outcome,
            flight.terminal_cause,
            str(flight.steps),
            f"{flight.final_goal_distance:.3f}",
            f"{flight.total_reward:.2f}",
        )
    console.print(table)
    console.print(
        f"reached goal: {result.reached_goal}  crashes: {result.crashes}  timeouts: {result.timeouts}",
    )


@app.command()
def viz(
    grid: Annotated[Path, typer.Option("--grid", help="Visitation counts (.npy)")],
    out: Annotated[Path, typer.Option("--out", help="Output graymap (.pgm); a .csv is written next to it")],
    normalization: Annotated[
        str,
        typer.Option("--normalization", "-n", help="Scale by the busiest cell (max) or logarithmically (log)"),
    ] = "max",
) -> None:
    """Render a visitation grid snapshot."""
    if normalization not in ("max", "log"):
        raise typer.BadParameter(f"expected 'max' or 'log', got '{normalization}'", param_hint="--normalization")
    scale: Normalization = "log" if normalization == "log" else "max"
    try:
        counts = VisitationGrid.load(grid, normalization=scale)
        image, values = render_grid(counts, out)
    except (CurioflightError, OSError, ValueError) as e:
        _fail(str(e), EXIT_RUNTIME)
    console.print(f"[green]✓[/green] {image} and {values} ({counts.total} visits)")


@app.command()
def selftest(
    json_output: Annotated[bool, typer.Option("--json", "-j", help="Output JSON instead of a table")] = False,
) -> None:
    """Run the gradient, GAE, clipping, physics, reward, decay and grid checks."""
    result = run_selftest()
    if json_output:
        console.print(orjson.dumps(result.model_dump(), option=orjson.OPT_INDENT_2).decode(), soft_wrap=True)
    else:
        table = Table(title="curioflight self-test")
        table.add_column("Check", style="cyan")
        table.add_column("Result")
        table.add_column("Detail", style="white")
        for check in result.checks:
            status = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
            table.add_row(check.name, status, check.detail)
        console.print(table)
    if result.status != "pass":
        raise typer.Exit(code=EXIT_RUNTIME)


@app.command()
def report(
    metrics: Annotated[list[Path], typer.Argument(help="metrics.csv of each run")],
    out: Annotated[Path, typer.Option("--out", help="Aggregate CSV (per-batch min/max/mean)")],
) -> None:
    """Aggregate several runs into min/max/mean bands."""
    try:
        batches = aggregate_runs(metrics, out)
    except (CurioflightError, OSError, ValueError) as e:
        _fail(str(e), EXIT_RUNTIME)
    console.print(f"[green]✓[/green] {batches} batches from {len(metrics)} runs written to {out}")


@app.command()
def version() -> None:
    """Show version information."""
    versions = get_versions()
    table = Table(title="curioflight Version Information")
    table.add_column("Component", style="cyan")
    table.add_column("Version", style="green")

    for component, found in versions.items():
        table.add_row(component, found or "not installed")

    console.print(table)


def run(argv: list[str] | None = None) -> int:
    """Invoke the CLI and return its exit code (usage errors map to 1)."""
    try:
        result = app(args=argv, prog_name="curioflight", standalone_mode=False)
    except UsageError as e:
        e.show()  # type: ignore[attr-defined]
        return EXIT_USAGE
    except typer.Abort:
        return EXIT_USAGE
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
