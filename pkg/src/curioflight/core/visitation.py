"""XY visitation counting and graymap rendering."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from curioflight.core._logging import get_logger

logger = get_logger(__name__)

PGM_MAX_VALUE = 255

Normalization = Literal["max", "log"]


class VisitationGrid:
    """Counters over [-x_max, x_max] x [-y_max, y_max].

    Row 0 is the +y edge and column 0 the -x edge, so the rendered image reads
    like a top-down map. Positions outside the bounds land in the nearest
    edge cell and are tallied in ``clamped``.

    ``normalization`` picks the rendering scale: "max" divides by the busiest
    cell, "log" divides log(1 + count) by log(1 + max).
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        x_max: float,
        y_max: float,
        normalization: Normalization = "max",
    ) -> None:
        if rows <= 0 or cols <= 0:
            raise ValueError(f"grid needs positive rows and cols, got {rows}x{cols}")
        if normalization not in ("max", "log"):
            raise ValueError(f"unknown normalization '{normalization}', expected 'max' or 'log'")
        self.rows = rows
        self.cols = cols
        self.x_max = x_max
        self.y_max = y_max
        self.normalization = normalization
        self.counts = np.zeros((rows, cols), dtype=np.int64)
        self.clamped = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell_of(self, x: float, y: float) -> tuple[int, int, bool]:
        """(row, col, inside) for a position; indices are already clamped."""
        col = int(np.floor((x + self.x_max) / (2 * self.x_max) * self.cols))
        row = int(np.floor((self.y_max - y) / (2 * self.y_max) * self.rows))
        inside = abs(x) <= self.x_max and abs(y) <= self.y_max
        return min(max(row, 0), self.rows - 1), min(max(col, 0), self.cols - 1), inside

    def add_point(self, position) -> None:
        self.add(np.asarray(position, dtype=np.float64).reshape(1, -1))

    def add(self, positions) -> None:
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        outside = 0
        for x, y in positions[:, :2]:
            row, col, inside = self.cell_of(x, y)
            self.counts[row, col] += 1
            outside += not inside
        if outside:
            self.clamped += outside
            logger.warning("%d position(s) outside the grid bounds were clamped to edge cells", outside)

    def normalized(self) -> NDArray[np.float64]:
        """Values in [0, 1] with the busiest cell at 1; all zeros for an empty grid."""
        peak = self.counts.max()
        if peak == 0:
            return np.zeros(self.counts.shape)
        if self.normalization == "log":
            return np.log1p(self.counts) / np.log1p(peak)
        return self.counts / peak

    def save(self, path: Path) -> None:
        """Raw counters as .npy; bounds are not stored."""
        with path.open("wb") as handle:
            np.save(handle, self.counts, allow_pickle=False)

    @classmethod
    def load(
        cls,
        path: Path,
        x_max: float = 1.0,
        y_max: float = 1.0,
        normalization: Normalization = "max",
    ) -> VisitationGrid:
        counts = np.load(path, allow_pickle=False)
        if counts.ndim != 2 or np.any(counts < 0):
            raise ValueError(f"{path} does not hold a 2-D nonnegative count grid")
        grid = cls(counts.shape[0], counts.shape[1], x_max, y_max, normalization)
        grid.counts = counts.astype(np.int64)
        return grid


def update_visitation(grid: VisitationGrid, trajectory) -> None:
    """Add one count per trajectory step (rows of x, y[, z])."""
    grid.add(trajectory)


def to_pixels(normalized: NDArray[np.float64]) -> NDArray[np.int64]:
    """[0, 1] values to 0..255 with round-half-up."""
    return np.floor(normalized * PGM_MAX_VALUE + 0.5).astype(np.int64)


def render_grid(grid: VisitationGrid, out: Path) -> tuple[Path, Path]:
    """Write a plain (P2) graymap and a CSV of normalized values.

    Args:
        grid: Counters to render.
        out: Image path; the CSV goes next to it with a ``.csv`` suffix.

    Returns:
        (image path, CSV path).

    """
    if grid.total == 0:
        logger.warning("Rendering an empty visitation grid; the image is all zeros")
    values = grid.normalized()
    pixels = to_pixels(values)

    lines = [
        "P2",
        f"# curioflight visitation grid: rows=+y..-y cols=-x..+x max_count={int(grid.counts.max())} scale={grid.normalization}",
        f"{grid.cols} {grid.rows}",
        str(PGM_MAX_VALUE),
    ]
    lines.extend(" ".join(str(p) for p in row) for row in pixels)
    out.write_text("\n".join(lines) + "\n", encoding="ascii")

    csv_path = out.with_suffix(".csv")
    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for row in values:
            writer.writerow([repr(float(v)) for v in row])
    return out, csv_path


def read_pgm(path: Path) -> NDArray[np.int64]:
    """Parse a plain graymap written by render_grid."""
    tokens = []
    for line in path.read_text(encoding="ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path} is not a plain graymap")
    cols, rows, _ = (int(t) for t in tokens[1:4])
    return np.array([int(t) for t in tokens[4:]], dtype=np.int64).reshape(rows, cols)
