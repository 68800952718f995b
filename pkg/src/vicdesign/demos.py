"""Demonstration ingestion: load, validate, time-align and resample trajectories.

A demonstration is a single time-stamped position trace for one axis.  A set of
demonstrations of the same task is aligned onto a common uniform time grid
(linear interpolation, cropped to the common time overlap) to form the dataset
consumed by the heteroscedastic GP.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AlignmentError, ParseError, ValidationError
from .validation import as_float_array, check_finite, check_positive, check_strictly_increasing

_GRID_SNAP = 1e-9  # tolerance when counting grid steps into the overlap


@dataclass(frozen=True)
class Demonstration:
    """One recorded trajectory: strictly increasing times and positions (m)."""

    axis: str
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        t = as_float_array(self.t, "t", ndim=1)
        p = as_float_array(self.p, "p", ndim=1)
        if t.shape != p.shape:
            raise ValidationError(f"t and p must have equal length, got {t.size} and {p.size}")
        if t.size < 2:
            raise ValidationError("a demonstration needs at least 2 samples")
        check_finite(t, "t")
        check_finite(p, "p")
        check_strictly_increasing(t, "t")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "p", p)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


@dataclass(frozen=True)
class DemoCorpus:
    """Demonstrations of one axis resampled onto a shared uniform grid.

    ``matrix`` holds the aligned positions, one row per demonstration, and
    spans exactly the common time overlap of the inputs.
    """

    axis: str
    demonstrations: tuple[Demonstration, ...]
    grid: np.ndarray
    matrix: np.ndarray
    sample_period: float

    def __post_init__(self):
        grid = as_float_array(self.grid, "grid", ndim=1)
        matrix = as_float_array(self.matrix, "matrix", ndim=2)
        if len(self.demonstrations) < 2:
            raise ValidationError("a corpus needs at least 2 demonstrations")
        if matrix.shape != (len(self.demonstrations), grid.size):
            raise ValidationError(
                f"matrix shape {matrix.shape} does not match "
                f"{len(self.demonstrations)} demos x {grid.size} grid points")
        check_finite(matrix, "matrix")
        steps = np.diff(grid)
        if grid.size >= 2 and not np.allclose(steps, self.sample_period, rtol=1e-9, atol=1e-12):
            raise ValidationError("grid is not uniform at the declared sample period")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_demos(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_samples(self) -> int:
        return self.grid.size

    def as_demonstrations(self) -> list[Demonstration]:
        """Resampled rows viewed as demonstrations on the common grid."""
        return [Demonstration(self.axis, self.grid.copy(), row.copy()) for row in self.matrix]


def load_demonstration_csv(path, axis: str) -> Demonstration:
    """Read one `t,p` CSV file (seconds, meters) into a Demonstration."""
    path = Path(path)
    if not path.exists():
        raise ParseError("demonstration file not found", path=str(path))
    times: list[float] = []
    positions: list[float] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["t", "p"]:
            raise ParseError("expected header 't,p'", path=str(path), line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ParseError("row needs two columns 't,p'", path=str(path), line=lineno)
            try:
                t_val = float(row[0])
                p_val = float(row[1])
            except ValueError as exc:
                raise ParseError(f"malformed number: {exc}", path=str(path), line=lineno) from None
            if not (math.isfinite(t_val) and math.isfinite(p_val)):
                raise ParseError("non-finite value", path=str(path), line=lineno)
            times.append(t_val)
            positions.append(p_val)
    if len(times) < 2:
        raise ValidationError(f"{path}: a demonstration needs at least 2 samples")
    t = np.array(times)
    if not np.all(np.diff(t) > 0):
        bad = int(np.argmin(np.diff(t) > 0)) + 2
        raise ValidationError(f"{path}: timestamps not strictly increasing near line {bad}")
    return Demonstration(axis, t, np.array(positions))


def load_demonstrations(paths: Iterable, axis: str) -> list[Demonstration]:
    """Load one Demonstration per file, in the given order."""
    paths = list(paths)
    if not paths:
        raise ValidationError("no demonstration files given")
    return [load_demonstration_csv(p, axis) for p in paths]


def align(demos: Sequence[Demonstration], sample_period: float) -> DemoCorpus:
    """Resample demonstrations onto the uniform grid spanning their overlap.

    The grid starts at the latest start time, steps at ``sample_period`` and
    ends at or before the earliest end time; values are linearly interpolated.
    """
    if not demos:
        raise ValidationError("align needs at least one demonstration")
    axes = {d.axis for d in demos}
    if len(axes) != 1:
        raise ValidationError(f"demonstrations mix axes: {sorted(axes)}")
    check_positive(sample_period, "sample_period")

    start = max(float(d.t[0]) for d in demos)
    end = min(float(d.t[-1]) for d in demos)
    if end <= start:
        raise AlignmentError(f"demonstrations have no common time overlap ({start} >= {end})")
    n = int(math.floor((end - start) / sample_period + _GRID_SNAP)) + 1
    if n < 2:
        raise AlignmentError("common overlap shorter than one sample period")
    grid = start + np.arange(n) * sample_period
    matrix = np.vstack([np.interp(grid, d.t, d.p) for d in demos])
    return DemoCorpus(
        axis=demos[0].axis,
        demonstrations=tuple(demos),
        grid=grid,
        matrix=matrix,
        sample_period=float(sample_period),
    )
