"""Shared fixtures: synthetic corpora and fitted task models."""

import numpy as np
import pytest

from vicdesign.demos import Demonstration, align
from vicdesign.hgp import TaskModel, fit_hgp


def make_corpus(seed=5, n_samples=240, n_demos=10, horizon=11.95, axis="x"):
    """Task-scale corpus: smooth reference, two low-variance (stiff) phases.

    The reference starts almost at rest so the certified effort ceiling is not
    dominated by the initial velocity jump.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, horizon, n_samples)
    base = 0.30 + 0.04 * (1 - np.cos(2 * np.pi * t / horizon)) + 0.005 * t
    sigma = (0.004
             + 0.012 * np.exp(-0.5 * ((t - 0.25 * horizon) / 1.2) ** 2)
             + 0.010 * np.exp(-0.5 * ((t - 0.80 * horizon) / 1.5) ** 2))
    demos = [Demonstration(axis, t, base + rng.standard_normal(n_samples) * sigma)
             for _ in range(n_demos)]
    return align(demos, t[1] - t[0])


def make_heteroscedastic_corpus(seed=11, n_samples=240, n_demos=10):
    """Short corpus with the linear noise-growth law used for recovery tests."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n_samples)
    sigma = 0.01 + 0.05 * t
    demos = [Demonstration("x", t, np.sin(3 * t) + rng.standard_normal(n_samples) * sigma)
             for _ in range(n_demos)]
    return align(demos, t[1] - t[0]), sigma


def make_flat_model(horizon=10.0, n=201, variance=1e-4, mean_value=0.3, d0=0.0):
    """Hand-built task model with a constant reference and flat variance."""
    grid = np.linspace(0.0, horizon, n)
    return TaskModel(
        grid=grid,
        mean=np.full(n, mean_value),
        d_mean=np.full(n, d0),
        dd_mean=np.zeros(n),
        variance=np.full(n, variance),
        em_iterations=1,
        axis="x",
    )


@pytest.fixture(scope="session")
def task_corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def task_model(task_corpus):
    return fit_hgp(task_corpus, seed=0)
