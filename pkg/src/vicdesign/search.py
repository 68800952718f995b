"""Outer solution search over (K_max, K_min, D) with a GP surrogate.

Candidates are scored by the design assessment (a cost in [0, 1]); a
squared-exponential surrogate with per-dimension length scales drives an
expected-improvement acquisition over a seeded random pool.  The triangle
constraint K_max > K_min is kept by swapping the two coordinates of any
violating sample, which maps the unit square uniformly onto the triangle.
The search stops once no improvement larger than ``eps_improve`` has been
seen for ``stall_window`` consecutive evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from .errors import SearchError, ValidationError
from .hgp import TaskModel
from .preference import (AssessmentResult, DesignConfig, DesignVariant, assess,
                         build_field)
from .stiffness import ControllerSolution

_POOL_GLOBAL = 448
_POOL_LOCAL = 64
_JITTER = 1e-10


@dataclass
class TraceEntry:
    iteration: int
    k_max: float
    k_min: float
    d: float
    f_s: float
    f_perf: float
    f_safety: float | None
    status: str
    best_f_s: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "k_max_n_per_m": self.k_max,
            "k_min_n_per_m": self.k_min,
            "d_n_s_per_m": self.d,
            "f_s": self.f_s,
            "f_perf": self.f_perf,
            "f_safety": self.f_safety,
            "status": self.status,
            "best_f_s": self.best_f_s,
        }


@dataclass
class SearchOutcome:
    solution: ControllerSolution
    assessment: AssessmentResult
    trace: list = field(default_factory=list)
    n_iterations: int = 0
    converged: bool = False


class _SurrogateGp:
    """Anisotropic SE-kernel GP on the unit cube with ML-fitted scales."""

    def __init__(self):
        self.theta = np.array([0.0, -1.0, -1.0, -1.0, -4.0])  # log sv, log ell(3), log noise

    @staticmethod
    def _kernel(x1, x2, theta):
        sv = math.exp(theta[0])
        ell = np.exp(theta[1:4])
        d = (x1[:, None, :] - x2[None, :, :]) / ell[None, None, :]
        return sv * np.exp(-0.5 * np.sum(d * d, axis=2))

    def _nll(self, theta, x, y):
        if np.max(np.abs(theta)) > 12.0:
            return 1e12
        k = self._kernel(x, x, theta)
        k[np.diag_indices_from(k)] += math.exp(theta[4]) + _JITTER
        try:
            factor = cho_factor(k, lower=True)
        except np.linalg.LinAlgError:
            return 1e12
        alpha = cho_solve(factor, y)
        ll = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(factor[0]))))
        return -ll if np.isfinite(ll) else 1e12

    def refit(self, x, y):
        res = minimize(self._nll, self.theta, args=(x, y), method="Nelder-Mead",
                       options={"maxiter": 120, "xatol": 1e-2, "fatol": 1e-3})
        if np.isfinite(res.fun) and res.fun < 1e11:
            self.theta = res.x

    def condition(self, x, y):
        self._x = x
        k = self._kernel(x, x, self.theta)
        k[np.diag_indices_from(k)] += math.exp(self.theta[4]) + _JITTER
        self._factor = cho_factor(k, lower=True)
        self._alpha = cho_solve(self._factor, y)

    def predict(self, xq):
        ks = self._kernel(xq, self._x, self.theta)
        mean = ks @ self._alpha
        v = cho_solve(self._factor, ks.T)
        var = math.exp(self.theta[0]) - np.einsum("ij,ji->i", ks, v)
        return mean, np.sqrt(np.maximum(var, 1e-16))


def _expected_improvement(mean, std, best):
    z = (best - mean) / std
    # minimization EI with the standard normal cdf/pdf
    cdf = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return (best - mean) * cdf + std * pdf


class VicDesigner(BaseEstimator):
    """Search for the most suitable controller under one design variant.

    Parameters mirror the design-session configuration; ``fit`` consumes a
    TaskModel and exposes the found solution, its certification artifacts and
    the full evaluation trace as fitted attributes.
    """

    def __init__(self, design="D", similarity: float = 0.5, scale: float = 0.5,
                 k_lower: float = 0.0, k_upper: float = 10000.0,
                 d_lower: float = 0.0, d_upper: float = 2500.0,
                 u_max_bar: float = 10.0, dp_max="auto", os_bar: float = 5.0,
                 h: float = 2.0, ts: float = 1e-3, seed: int = 0,
                 eps_improve: float = 0.01, stall_window: int = 75,
                 max_iters: int = 1000, n_seed_points: int = 16,
                 t_tol: float = 3e-3, verify_profile: bool = True):
        self.design = design
        self.similarity = similarity
        self.scale = scale
        self.k_lower = k_lower
        self.k_upper = k_upper
        self.d_lower = d_lower
        self.d_upper = d_upper
        self.u_max_bar = u_max_bar
        self.dp_max = dp_max
        self.os_bar = os_bar
        self.h = h
        self.ts = ts
        self.seed = seed
        self.eps_improve = eps_improve
        self.stall_window = stall_window
        self.max_iters = max_iters
        self.n_seed_points = n_seed_points
        self.t_tol = t_tol
        self.verify_profile = verify_profile

    def _config(self) -> DesignConfig:
        return DesignConfig(
            design=DesignVariant.parse(self.design), h=self.h, ts=self.ts,
            k_lower=self.k_lower, k_upper=self.k_upper,
            d_lower=self.d_lower, d_upper=self.d_upper,
            u_max_bar=self.u_max_bar, dp_max=self.dp_max, os_bar=self.os_bar,
            similarity=self.similarity, scale=self.scale, seed=self.seed,
            max_iters=self.max_iters, n_seed_points=self.n_seed_points,
            eps_improve=self.eps_improve, stall_window=self.stall_window,
            t_tol=self.t_tol, verify_profile=self.verify_profile)

    def fit(self, model: TaskModel, y=None) -> "VicDesigner":
        outcome = search(model, self._config())
        self.solution_ = outcome.solution
        self.assessment_ = outcome.assessment
        self.score_ = outcome.assessment.score
        self.trace_ = outcome.trace
        self.n_iterations_ = outcome.n_iterations
        self.converged_ = outcome.converged
        return self

    def predict(self, model: TaskModel = None) -> ControllerSolution:
        if not hasattr(self, "solution_"):
            raise SearchError("designer is not fitted; call fit(model) first")
        return self.solution_


def _triangle_remap(u: np.ndarray) -> np.ndarray:
    """Swap the stiffness coordinates wherever K_max <= K_min."""
    out = u.copy()
    swap = out[:, 0] <= out[:, 1]
    out[swap, 0], out[swap, 1] = u[swap, 1], u[swap, 0]
    return out


def search(model: TaskModel, cfg: DesignConfig) -> SearchOutcome:
    """Run the surrogate-driven search and return the best certified candidate."""
    if cfg.max_iters < cfg.n_seed_points:
        raise ValidationError("max_iters must cover at least the seed evaluations")
    rng = np.random.default_rng(cfg.seed)
    field_ = build_field(cfg.preference())
    k_span = cfg.k_upper - cfg.k_lower
    d_span = cfg.d_upper - cfg.d_lower

    def to_params(unit: np.ndarray) -> tuple:
        k_max = cfg.k_lower + unit[0] * k_span
        k_min = cfg.k_lower + unit[1] * k_span
        d = cfg.d_lower + unit[2] * d_span
        return k_max, k_min, d

    def evaluate(unit: np.ndarray, iteration: int):
        k_max, k_min, d = to_params(unit)
        if k_max <= k_min:  # same-value corner case after remap
            return None
        sol = ControllerSolution(k_max=k_max, k_min=k_min, d=d, h=cfg.h)
        return sol, assess(sol, model, cfg.design, cfg, pref_field=field_)

    x_unit: list[np.ndarray] = []
    scores: list[float] = []
    trace: list[TraceEntry] = []
    best: tuple | None = None  # (f_s, sol, assessment)
    anchor: float | None = None  # best score at the last counted improvement
    last_improvement_at = 0

    def record(unit, sol, result, iteration):
        nonlocal best, anchor, last_improvement_at
        f_s = result.score.f_s
        if best is None or f_s < best[0]:
            best = (f_s, sol, result)
            if anchor is None or anchor - f_s >= cfg.eps_improve:
                anchor = f_s
                last_improvement_at = iteration
        x_unit.append(unit)
        scores.append(f_s)
        trace.append(TraceEntry(
            iteration=iteration, k_max=sol.k_max, k_min=sol.k_min, d=sol.d,
            f_s=f_s, f_perf=result.score.f_perf, f_safety=result.score.f_safety,
            status=result.status, best_f_s=best[0]))

    iteration = 0
    while iteration < cfg.n_seed_points:
        unit = _triangle_remap(rng.uniform(size=(1, 3)))[0]
        ev = evaluate(unit, iteration)
        if ev is None:
            continue
        record(unit, *ev, iteration)
        iteration += 1

    surrogate = _SurrogateGp()
    while iteration < cfg.max_iters:
        if iteration - last_improvement_at >= cfg.stall_window:
            break
        x = np.array(x_unit)
        y = np.array(scores)
        y_mean, y_std = float(y.mean()), float(y.std())
        y_n = (y - y_mean) / max(y_std, 1e-12)
        if iteration == cfg.n_seed_points or iteration % 10 == 0:
            surrogate.refit(x, y_n)
        surrogate.condition(x, y_n)

        pool = _triangle_remap(rng.uniform(size=(_POOL_GLOBAL, 3)))
        if best is not None:
            radius = max(0.02, 0.3 * (1.0 - iteration / cfg.max_iters))
            center = np.array([
                (best[1].k_max - cfg.k_lower) / k_span,
                (best[1].k_min - cfg.k_lower) / k_span,
                (best[1].d - cfg.d_lower) / max(d_span, 1e-12),
            ])
            local = center[None, :] + radius * rng.standard_normal((_POOL_LOCAL, 3))
            local = np.clip(local, 0.0, 1.0)
            pool = np.vstack([pool, _triangle_remap(local)])

        pool = pool[pool[:, 0] > pool[:, 1]]  # drop degenerate diagonal samples
        if pool.size == 0:
            continue
        mean, std = surrogate.predict(pool)
        ei = _expected_improvement(mean, std, float(y_n.min()))
        unit = pool[int(np.argmax(ei))]
        ev = evaluate(unit, iteration)
        if ev is None:
            continue
        record(unit, *ev, iteration)
        iteration += 1

    if best is None or not np.isfinite(best[0]):
        raise SearchError("search produced no scored candidates")
    if best[0] >= 1.0 - 1e-12:
        raise SearchError(
            f"no feasible candidate found in {iteration} evaluations "
            f"(design {cfg.design.value}); consider relaxing bounds or ceilings")

    # final high-precision certification of the returned candidate
    final_cfg = cfg if cfg.t_tol <= 1e-4 else replace(cfg, t_tol=1e-4)
    final = assess(best[1], model, cfg.design, final_cfg, pref_field=field_)
    if not final.accepted:
        final = best[2]
    return SearchOutcome(solution=best[1], assessment=final,
                         trace=trace, n_iterations=iteration,
                         converged=iteration < cfg.max_iters)
