"""Heteroscedastic Gaussian Process fit to a demonstration corpus via EM.

Two squared-exponential GPs are alternated: one models the mean trajectory,
the other the log of the input-dependent observation noise.  Because the
corpus is aligned (M replicate observations per grid point), the mean GP is
conditioned exactly on the per-point demo averages with noise divided by M,
which keeps every linear solve at grid size T instead of M*T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import digamma
from sklearn.base import BaseEstimator

from .demos import DemoCorpus
from .errors import FitError, ValidationError
from .validation import as_float_array, check_finite, check_positive

_LOG_PARAM_LIMIT = 30.0  # reject hyperparameter proposals beyond e^±30


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters of one GP."""

    signal_variance: float
    length_scale: float
    noise_floor: float

    def __post_init__(self):
        check_positive(self.signal_variance, "signal_variance")
        check_positive(self.length_scale, "length_scale")
        check_positive(self.noise_floor, "noise_floor")

    def to_dict(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "length_scale": self.length_scale,
            "noise_floor": self.noise_floor,
        }


@dataclass(frozen=True)
class TaskModel:
    """Posterior summary of the task on the corpus grid.

    ``variance`` is the predictive variance of a new observation (latent
    uncertainty plus input-dependent noise), the quantity whose inverse
    defines the compliance used for stiffness scaling.
    """

    grid: np.ndarray
    mean: np.ndarray
    d_mean: np.ndarray
    dd_mean: np.ndarray
    variance: np.ndarray
    compliance: np.ndarray = field(default=None)
    em_iterations: int = 0
    axis: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = as_float_array(self.grid, "grid", ndim=1)
        arrays = {}
        for name in ("mean", "d_mean", "dd_mean", "variance"):
            arr = as_float_array(getattr(self, name), name, ndim=1)
            if arr.shape != grid.shape:
                raise ValidationError(f"{name} length {arr.size} != grid length {grid.size}")
            check_finite(arr, name)
            arrays[name] = arr
        if np.any(arrays["variance"] <= 0):
            raise ValidationError("variance must be strictly positive everywhere")
        object.__setattr__(self, "grid", grid)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "compliance", 1.0 / arrays["variance"])

    @property
    def sample_period(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def horizon(self) -> float:
        return float(self.grid[-1] - self.grid[0])

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "grid": self.grid.tolist(),
            "mean": self.mean.tolist(),
            "d_mean": self.d_mean.tolist(),
            "dd_mean": self.dd_mean.tolist(),
            "variance": self.variance.tolist(),
            "em_iterations": self.em_iterations,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskModel":
        return cls(
            grid=np.asarray(d["grid"], dtype=float),
            mean=np.asarray(d["mean"], dtype=float),
            d_mean=np.asarray(d["d_mean"], dtype=float),
            dd_mean=np.asarray(d["dd_mean"], dtype=float),
            variance=np.asarray(d["variance"], dtype=float),
            em_iterations=int(d.get("em_iterations", 0)),
            axis=d.get("axis", ""),
            metadata=d.get("metadata", {}),
        )


def _se_kernel(x1: np.ndarray, x2: np.ndarray, signal_variance: float,
               length_scale: float) -> np.ndarray:
    d = (x1[:, None] - x2[None, :]) / length_scale
    return signal_variance * np.exp(-0.5 * d * d)


def _chol_with_jitter(s: np.ndarray):
    """Cholesky factor with escalating jitter; raises FitError if hopeless."""
    scale = float(np.mean(np.diag(s))) or 1.0
    jitter = 1e-12 * scale
    for _ in range(7):
        try:
            return cho_factor(s + jitter * np.eye(s.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FitError("singular kernel matrix even after jitter escalation")


class _Gp:
    """Zero-mean SE-kernel GP conditioned on targets with per-point noise."""

    def __init__(self, x: np.ndarray, y: np.ndarray, noise_var: np.ndarray,
                 signal_variance: float, length_scale: float):
        self.x = x
        self.offset = float(np.mean(y))
        self.yc = y - self.offset
        self.signal_variance = signal_variance
        self.length_scale = length_scale
        k = _se_kernel(x, x, signal_variance, length_scale)
        s = k + np.diag(noise_var)
        self._factor = _chol_with_jitter(s)
        self.alpha = cho_solve(self._factor, self.yc)
        self._k_train = k

    def posterior(self, x_new: np.ndarray):
        k_star = _se_kernel(x_new, self.x, self.signal_variance, self.length_scale)
        mean = k_star @ self.alpha + self.offset
        v = cho_solve(self._factor, k_star.T)
        var = self.signal_variance - np.einsum("ij,ji->i", k_star, v)
        return mean, np.maximum(var, 0.0)

    def posterior_on_train(self):
        mean = self._k_train @ self.alpha + self.offset
        v = cho_solve(self._factor, self._k_train)
        var = self.signal_variance - np.einsum("ij,ji->i", self._k_train, v)
        return mean, np.maximum(var, 0.0)


def _replicated_lml(grid, ybar_c, ss_sum, m, log_params):
    """Log marginal likelihood of M replicate rows, homoscedastic noise.

    ``ss_sum`` is the per-point within-replicate scatter sum Σ_m (y - ybar)^2.
    """
    log_sv, log_ell, log_r = log_params
    if max(abs(log_sv), abs(log_ell), abs(log_r)) > _LOG_PARAM_LIMIT:
        return -np.inf
    sv, ell, r = np.exp(log_sv), np.exp(log_ell), np.exp(log_r)
    t = grid.size
    k = _se_kernel(grid, grid, sv, ell)
    s = k + (r / m) * np.eye(t)
    try:
        factor = cho_factor(s + 1e-12 * max(sv, r) * np.eye(t), lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve(factor, ybar_c)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    ll = -0.5 * float(ybar_c @ alpha) - 0.5 * logdet - 0.5 * t * np.log(2 * np.pi)
    # exact replicate terms: within-point scatter and the collapse to means
    ll += -0.5 * m * t * np.log(2 * np.pi * r) - 0.5 * float(np.sum(ss_sum)) / r
    ll += 0.5 * t * np.log(2 * np.pi * r / m)
    return ll if np.isfinite(ll) else -np.inf


def _plain_lml(x, yc, log_params):
    """Standard homoscedastic GP log marginal likelihood."""
    log_sv, log_ell, log_r = log_params
    if max(abs(log_sv), abs(log_ell), abs(log_r)) > _LOG_PARAM_LIMIT:
        return -np.inf
    sv, ell, r = np.exp(log_sv), np.exp(log_ell), np.exp(log_r)
    t = x.size
    k = _se_kernel(x, x, sv, ell)
    s = k + r * np.eye(t)
    try:
        factor = cho_factor(s + 1e-12 * max(sv, r) * np.eye(t), lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve(factor, yc)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    ll = -0.5 * float(yc @ alpha) - 0.5 * logdet - 0.5 * t * np.log(2 * np.pi)
    return ll if np.isfinite(ll) else -np.inf


def _maximize(neg_fn, starts):
    """Nelder-Mead from each start; returns the best parameter vector found."""
    best_x, best_v = None, np.inf
    for x0 in starts:
        res = minimize(neg_fn, np.asarray(x0, dtype=float), method="Nelder-Mead",
                       options={"maxiter": 220, "xatol": 1e-3, "fatol": 1e-4})
        if res.fun < best_v:
            best_v, best_x = res.fun, res.x
    if best_x is None or not np.isfinite(best_v):
        raise FitError("hyperparameter search failed to find a finite likelihood")
    return best_x


class HeteroscedasticGP(BaseEstimator):
    """EM-alternated mean/noise GP pair over an aligned demo corpus.

    Parameters
    ----------
    max_em_iters : int
        Hard cap on EM iterations.
    rel_tol : float
        Relative-change threshold on the grid-averaged predicted noise
        between successive iterations (default 5%).
    noise_floor : float
        Lower bound on estimated noise variances (m^2).
    noise_estimator : {"residual", "sampled"}
        "residual" uses the cross-demo residual variance against the current
        posterior mean; "sampled" averages squared residuals over posterior
        draws of the latent mean.
    n_posterior_samples : int
        Draw count for the "sampled" estimator.
    seed : int
        Only consumed by the "sampled" estimator; the default path is
        deterministic regardless.
    """

    def __init__(self, max_em_iters: int = 50, rel_tol: float = 0.05,
                 noise_floor: float = 1e-10, noise_estimator: str = "residual",
                 n_posterior_samples: int = 64, seed: int = 0):
        self.max_em_iters = max_em_iters
        self.rel_tol = rel_tol
        self.noise_floor = noise_floor
        self.noise_estimator = noise_estimator
        self.n_posterior_samples = n_posterior_samples
        self.seed = seed

    # -- fitting ---------------------------------------------------------

    def fit(self, corpus: DemoCorpus, y=None) -> "HeteroscedasticGP":
        if not isinstance(corpus, DemoCorpus):
            raise ValidationError("fit expects a DemoCorpus")
        if self.max_em_iters < 1:
            raise ValidationError("max_em_iters must be >= 1")
        if self.noise_estimator not in ("residual", "sampled"):
            raise ValidationError(f"unknown noise_estimator {self.noise_estimator!r}")

        grid = corpus.grid
        y_mat = corpus.matrix
        m = corpus.n_demos
        ybar = y_mat.mean(axis=0)
        offset = float(ybar.mean())
        ybar_c = ybar - offset
        ss_sum = np.sum((y_mat - ybar) ** 2, axis=0)
        rng = np.random.default_rng(self.seed)

        span = float(grid[-1] - grid[0])
        vy = float(np.var(ybar_c)) + 1e-12
        scatter = float(np.mean(ss_sum) / max(m - 1, 1)) + self.noise_floor

        # 1) homoscedastic mean GP, hyperparameters by multi-start ML
        starts = [
            (np.log(vy), np.log(span / 10), np.log(scatter)),
            (np.log(vy), np.log(span / 3), np.log(scatter * 0.1 + self.noise_floor)),
            (np.log(10 * vy + 1e-12), np.log(span / 30), np.log(vy * 0.5 + self.noise_floor)),
        ]
        best = _maximize(lambda lp: -_replicated_lml(grid, ybar_c, ss_sum, m, lp), starts)
        sv, ell, r0 = np.exp(best)
        self.kernel_params_ = KernelParams(sv, ell, max(r0, self.noise_floor))

        noise_vec = np.full(grid.size, max(r0, self.noise_floor))
        gp_mean = _Gp(grid, ybar, noise_vec / m, sv, ell)
        mu, var_f = gp_mean.posterior_on_train()

        # chi-square log-bias offset so exp(E[log est]) tracks the true variance
        nu = max(m - 1, 1)
        log_debias = np.log(nu / 2.0) - digamma(nu / 2.0)

        noise_kp = None
        gp_noise = None
        prev_scalar = float(np.mean(noise_vec))
        em_iters = self.max_em_iters
        for it in range(1, self.max_em_iters + 1):
            if self.noise_estimator == "residual":
                resid2 = np.sum((y_mat - mu) ** 2, axis=0) / nu
            else:
                draws = self._sample_latent(gp_mean, grid, rng)
                resid2 = np.mean((y_mat[None, :, :] - draws[:, None, :]) ** 2, axis=(0, 1)) * m / nu
            z = np.log(np.maximum(resid2, self.noise_floor)) + log_debias

            if noise_kp is None:
                zc = z - z.mean()
                vz = float(np.var(zc)) + 1e-8
                zstarts = [
                    (np.log(vz), np.log(span / 8), np.log(vz * 0.5 + 1e-8)),
                    (np.log(vz * 4 + 1e-8), np.log(span / 2), np.log(vz + 1e-8)),
                ]
                zbest = _maximize(lambda lp: -_plain_lml(grid, zc, lp), zstarts)
                noise_kp = KernelParams(*np.exp(zbest))
            gp_noise = _Gp(grid, z, np.full(grid.size, noise_kp.noise_floor),
                           noise_kp.signal_variance, noise_kp.length_scale)
            z_post, _ = gp_noise.posterior_on_train()
            noise_vec = np.maximum(np.exp(z_post), self.noise_floor)
            if not np.all(np.isfinite(noise_vec)):
                raise FitError("EM noise prediction became non-finite", iteration=it)

            gp_mean = _Gp(grid, ybar, noise_vec / m, sv, ell)
            mu, var_f = gp_mean.posterior_on_train()
            if not np.all(np.isfinite(mu)):
                raise FitError("EM mean prediction became non-finite", iteration=it)

            scalar = float(np.mean(noise_vec))
            if abs(scalar - prev_scalar) / max(abs(prev_scalar), 1e-12) < self.rel_tol:
                em_iters = it
                break
            prev_scalar = scalar

        self.noise_kernel_params_ = noise_kp
        self._gp_mean = gp_mean
        self._gp_noise = gp_noise
        self.grid_ = grid
        variance = np.maximum(var_f + noise_vec, self.noise_floor)

        h = float(grid[1] - grid[0])
        d_mean = np.gradient(mu, h)
        dd_mean = np.gradient(d_mean, h)
        self.model_ = TaskModel(
            grid=grid,
            mean=mu,
            d_mean=d_mean,
            dd_mean=dd_mean,
            variance=variance,
            em_iterations=em_iters,
            axis=corpus.axis,
            metadata={
                "n_demos": m,
                "sample_period": corpus.sample_period,
                "mean_kernel": self.kernel_params_.to_dict(),
                "noise_kernel": noise_kp.to_dict(),
                "noise_estimator": self.noise_estimator,
                "seed": self.seed,
            },
        )
        self.em_iterations_ = em_iters
        return self

    def _sample_latent(self, gp: _Gp, grid: np.ndarray, rng) -> np.ndarray:
        mean, var = gp.posterior_on_train()
        std = np.sqrt(var)
        eps = rng.standard_normal((self.n_posterior_samples, grid.size))
        return mean[None, :] + eps * std[None, :]

    # -- prediction ------------------------------------------------------

    def predict(self, t, return_std: bool = False):
        self._check_fitted()
        t = as_float_array(t, "t", ndim=1)
        mean, var_f = self._gp_mean.posterior(t)
        if not return_std:
            return mean
        z_mean, _ = self._gp_noise.posterior(t)
        noise = np.maximum(np.exp(z_mean), self.noise_floor)
        return mean, np.sqrt(var_f + noise)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise FitError("estimator is not fitted; call fit(corpus) first")


def fit_hgp(corpus: DemoCorpus, max_em_iters: int = 50, seed: int = 0,
            **kwargs) -> TaskModel:
    """Fit the heteroscedastic GP and return its TaskModel."""
    est = HeteroscedasticGP(max_em_iters=max_em_iters, seed=seed, **kwargs)
    return est.fit(corpus).model_


def extract_dp_max(model: TaskModel) -> float:
    """Smallest half-width of the 95% confidence band, min_t 1.96*sigma(t)."""
    return float(np.min(1.96 * np.sqrt(model.variance)))
