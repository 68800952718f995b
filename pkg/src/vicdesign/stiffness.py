"""Stiffness modulation: map compliance extremes to a bounded K(t) profile.

The profile interpolates logarithmically between the minimum and maximum
stiffness as the compliance moves between its task extremes, so the stiffest
behaviour coincides with the most consistent (lowest-variance) task phase.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateProfileError, ValidationError
from .hgp import TaskModel
from .validation import as_float_array, check_finite, check_positive


@dataclass(frozen=True)
class ControllerSolution:
    """Gain tuple completing the controller: bounds of K(t), damping, inertia."""

    k_max: float
    k_min: float
    d: float
    h: float

    def __post_init__(self):
        if not self.k_max > self.k_min:
            raise ValidationError(f"k_max must exceed k_min, got {self.k_max} <= {self.k_min}")
        if self.k_min < 0:
            raise ValidationError(f"k_min must be non-negative, got {self.k_min}")
        if self.d < 0:
            raise ValidationError(f"d must be non-negative, got {self.d}")
        check_positive(self.h, "h")

    def to_dict(self) -> dict:
        return {"k_max_n_per_m": self.k_max, "k_min_n_per_m": self.k_min,
                "d_n_s_per_m": self.d, "h_kg": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerSolution":
        return cls(k_max=float(d["k_max_n_per_m"]), k_min=float(d["k_min_n_per_m"]),
                   d=float(d["d_n_s_per_m"]), h=float(d["h_kg"]))


@dataclass(frozen=True)
class StiffnessProfile:
    """Time-varying stiffness K(t) with the compliance extremes that scaled it."""

    grid: np.ndarray
    k: np.ndarray
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        grid = as_float_array(self.grid, "grid", ndim=1)
        k = as_float_array(self.k, "k", ndim=1)
        if grid.shape != k.shape:
            raise ValidationError("grid and k must have equal length")
        check_finite(k, "k")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "k", k)

    def k_at(self, t: np.ndarray) -> np.ndarray:
        """Zero-order-hold sample of the profile at arbitrary times."""
        idx = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, self.grid.size - 1)
        return self.k[idx]


def scale_stiffness(lam, lam_min: float, lam_max: float, k_min: float, k_max: float):
    """Logarithmic compliance-to-stiffness scaling.

    Any logarithm base cancels in the ratio, so the natural log is used.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValidationError("compliance must be strictly positive")
    if not (lam_max > lam_min > 0):
        raise DegenerateProfileError(
            f"compliance extremes must satisfy 0 < lambda_min < lambda_max, "
            f"got [{lam_min}, {lam_max}]")
    frac = (np.log(lam) - np.log(lam_min)) / (np.log(lam_max) - np.log(lam_min))
    # the formula maps [lam_min, lam_max] onto [k_min, k_max]; clip float dust
    return np.clip(k_min + (k_max - k_min) * frac, min(k_min, k_max), max(k_min, k_max))


def build_profile(model: TaskModel, sol: ControllerSolution) -> StiffnessProfile:
    """Evaluate the stiffness scaling pointwise over the task grid."""
    lam = model.compliance
    lam_min = float(np.min(lam))
    lam_max = float(np.max(lam))
    if lam_max <= lam_min:
        raise DegenerateProfileError(
            "compliance is constant over the task; stiffness scaling is ill-posed "
            "(fall back to a constant-gain controller instead)")
    k = scale_stiffness(lam, lam_min, lam_max, sol.k_min, sol.k_max)
    return StiffnessProfile(grid=model.grid, k=k, lambda_min=lam_min, lambda_max=lam_max)


def write_profile_csv(profile: StiffnessProfile, model: TaskModel, path) -> None:
    """Export `t,lambda,k` rows for plotting."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "lambda", "k"])
        for t, lam, k in zip(profile.grid, model.compliance, profile.k):
            writer.writerow([repr(float(t)), repr(float(lam)), repr(float(k))])
