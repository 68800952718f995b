import json

import numpy as np
import pytest

from vicdesign.demos import Demonstration, align
from vicdesign.errors import FitError, ValidationError
from vicdesign.hgp import (HeteroscedasticGP, KernelParams, TaskModel, extract_dp_max,
                           fit_hgp)
from conftest import make_flat_model, make_heteroscedastic_corpus


@pytest.fixture(scope="module")
def hetero_fit():
    corpus, sigma_true = make_heteroscedastic_corpus()
    est = HeteroscedasticGP(max_em_iters=50, seed=0).fit(corpus)
    return corpus, sigma_true, est


class TestFit:
    def test_variance_recovery_against_sample_oracle(self, hetero_fit):
        corpus, sigma_true, est = hetero_fit
        model = est.model_
        # increasing noise law: the variance must grow along the task
        t_half = model.grid.size // 2
        assert model.variance[:t_half].mean() < model.variance[t_half:].mean()
        ratio = model.variance[-1] / model.variance[0]
        truth = (sigma_true[-1] / sigma_true[0]) ** 2
        assert truth / 2 <= ratio <= truth * 2
        # pointwise against the cross-demo sample-variance oracle, std scale
        oracle = np.sqrt(corpus.matrix.var(axis=0, ddof=1))
        rel = np.abs(np.sqrt(model.variance) - oracle) / oracle
        assert rel.mean() < 0.30

    def test_em_terminates_quickly(self, hetero_fit):
        _, _, est = hetero_fit
        assert 1 <= est.em_iterations_ <= 25

    def test_identical_demos_collapse_to_noise_floor(self):
        t = np.linspace(0, 1, 120)
        p = 0.2 + 0.1 * np.sin(4 * t)
        demos = [Demonstration("x", t, p.copy()) for _ in range(6)]
        corpus = align(demos, t[1] - t[0])
        est = HeteroscedasticGP(noise_floor=1e-10, seed=0).fit(corpus)
        assert est.model_.variance.max() < 1e-6

    def test_refit_same_seed_bit_reproducible(self):
        corpus, _ = make_heteroscedastic_corpus(seed=3, n_samples=80, n_demos=6)
        m1 = fit_hgp(corpus, seed=7)
        m2 = fit_hgp(corpus, seed=7)
        assert np.array_equal(m1.mean, m2.mean)
        assert np.array_equal(m1.variance, m2.variance)
        assert m1.em_iterations == m2.em_iterations

    def test_posterior_sampling_mode(self):
        corpus, _ = make_heteroscedastic_corpus(seed=3, n_samples=60, n_demos=6)
        est1 = HeteroscedasticGP(noise_estimator="sampled", seed=5,
                                 n_posterior_samples=16).fit(corpus)
        est2 = HeteroscedasticGP(noise_estimator="sampled", seed=5,
                                 n_posterior_samples=16).fit(corpus)
        np.testing.assert_array_equal(est1.model_.variance, est2.model_.variance)
        assert np.all(est1.model_.variance > 0)

    def test_mean_interpolates_low_noise_data(self):
        t = np.linspace(0, 1, 100)
        p = np.sin(2 * t)
        demos = [Demonstration("x", t, p + 1e-6 * np.cos(9 * t + m)) for m in range(4)]
        corpus = align(demos, t[1] - t[0])
        model = fit_hgp(corpus, seed=0)
        assert np.max(np.abs(model.mean - p)) < 1e-3

    def test_max_iter_cap_respected(self):
        corpus, _ = make_heteroscedastic_corpus(seed=3, n_samples=60, n_demos=6)
        est = HeteroscedasticGP(max_em_iters=1, rel_tol=1e-12).fit(corpus)
        assert est.em_iterations_ == 1

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            HeteroscedasticGP().fit("not a corpus")
        corpus, _ = make_heteroscedastic_corpus(seed=3, n_samples=40, n_demos=4)
        with pytest.raises(ValidationError):
            HeteroscedasticGP(max_em_iters=0).fit(corpus)
        with pytest.raises(ValidationError):
            HeteroscedasticGP(noise_estimator="bogus").fit(corpus)

    def test_predict_off_grid(self, hetero_fit):
        corpus, _, est = hetero_fit
        t_new = np.array([0.105, 0.51, 0.93])
        mean, std = est.predict(t_new, return_std=True)
        assert mean.shape == (3,) and std.shape == (3,)
        assert np.all(std > 0)
        # near the corresponding grid values
        ref = np.interp(t_new, est.model_.grid, est.model_.mean)
        np.testing.assert_allclose(mean, ref, atol=5e-3)

    def test_unfitted_predict_raises(self):
        with pytest.raises(FitError):
            HeteroscedasticGP().predict(np.array([0.0]))


class TestTaskModel:
    def test_compliance_is_exact_inverse(self, hetero_fit):
        _, _, est = hetero_fit
        model = est.model_
        np.testing.assert_allclose(model.compliance * model.variance, 1.0, rtol=1e-12)

    def test_compliance_extremes_are_dual(self, hetero_fit):
        _, _, est = hetero_fit
        model = est.model_
        assert np.argmax(model.compliance) == np.argmin(model.variance)
        assert np.argmin(model.compliance) == np.argmax(model.variance)

    def test_json_round_trip(self, hetero_fit):
        _, _, est = hetero_fit
        model = est.model_
        clone = TaskModel.from_dict(json.loads(json.dumps(model.to_dict())))
        np.testing.assert_array_equal(clone.mean, model.mean)
        np.testing.assert_array_equal(clone.variance, model.variance)
        assert clone.em_iterations == model.em_iterations
        assert clone.axis == model.axis

    def test_derivatives_match_reference_slope(self):
        # derivative arrays come from central differences of the fitted mean
        corpus, _ = make_heteroscedastic_corpus(seed=4, n_samples=120, n_demos=8)
        model = fit_hgp(corpus, seed=0)
        h = model.grid[1] - model.grid[0]
        np.testing.assert_allclose(model.d_mean[1:-1],
                                   (model.mean[2:] - model.mean[:-2]) / (2 * h),
                                   rtol=1e-10)

    def test_validation(self):
        grid = np.linspace(0, 1, 10)
        with pytest.raises(ValidationError):
            TaskModel(grid=grid, mean=np.zeros(10), d_mean=np.zeros(10),
                      dd_mean=np.zeros(10), variance=np.zeros(10))  # zero variance
        with pytest.raises(ValidationError):
            TaskModel(grid=grid, mean=np.zeros(9), d_mean=np.zeros(10),
                      dd_mean=np.zeros(10), variance=np.ones(10))


class TestDpMax:
    def test_constant_sigma(self):
        model = make_flat_model(variance=1e-4)
        assert extract_dp_max(model) == pytest.approx(0.0196, abs=1e-12)

    def test_minimum_over_dip(self):
        model = make_flat_model(variance=1e-4)
        variance = model.variance.copy()
        variance[37] = 0.005 ** 2
        dipped = TaskModel(grid=model.grid, mean=model.mean, d_mean=model.d_mean,
                           dd_mean=model.dd_mean, variance=variance)
        assert extract_dp_max(dipped) == pytest.approx(0.0098, abs=1e-12)


class TestKernelParams:
    def test_positive_required(self):
        with pytest.raises(ValidationError):
            KernelParams(signal_variance=0.0, length_scale=1.0, noise_floor=1.0)
        with pytest.raises(ValidationError):
            KernelParams(signal_variance=1.0, length_scale=-1.0, noise_floor=1.0)

    def test_sklearn_params_api(self):
        est = HeteroscedasticGP(max_em_iters=7, seed=3)
        params = est.get_params()
        assert params["max_em_iters"] == 7
        est.set_params(seed=9)
        assert est.seed == 9
