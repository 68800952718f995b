import numpy as np
import pytest

from vicdesign.errors import DegenerateProfileError, ValidationError
from vicdesign.stiffness import (ControllerSolution, StiffnessProfile, build_profile,
                                 scale_stiffness, write_profile_csv)
from conftest import make_flat_model


class TestControllerSolution:
    def test_valid(self):
        sol = ControllerSolution(k_max=1000, k_min=100, d=50, h=2)
        assert sol.k_max > sol.k_min

    @pytest.mark.parametrize("kwargs", [
        dict(k_max=100, k_min=100, d=0, h=2),   # equality forbidden
        dict(k_max=90, k_min=100, d=0, h=2),
        dict(k_max=100, k_min=-1, d=0, h=2),
        dict(k_max=100, k_min=0, d=-1, h=2),
        dict(k_max=100, k_min=0, d=0, h=0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            ControllerSolution(**kwargs)

    def test_dict_round_trip(self):
        sol = ControllerSolution(k_max=1234.5, k_min=67.8, d=910.1, h=2.0)
        assert ControllerSolution.from_dict(sol.to_dict()) == sol


class TestScaling:
    def test_log_midpoint(self):
        # lambda = 10 is the logarithmic midpoint of [1, 100]
        k = scale_stiffness(10.0, 1.0, 100.0, 100.0, 1000.0)
        assert abs(k - 550.0) < 1e-12 * 550.0

    def test_endpoints(self):
        assert abs(scale_stiffness(100.0, 1.0, 100.0, 100.0, 1000.0) - 1000.0) < 1e-9
        assert abs(scale_stiffness(1.0, 1.0, 100.0, 100.0, 1000.0) - 100.0) < 1e-9

    def test_randomized_endpoint_and_midpoint_identities(self):
        # acceptance-level exactness: 1e-12 relative over random draws
        rng = np.random.default_rng(42)
        for _ in range(300):
            k_min = rng.uniform(0, 5000)
            k_max = k_min + rng.uniform(1e-3, 10000)
            lam_min = rng.uniform(1e-6, 1e3)
            lam_max = lam_min * rng.uniform(1.001, 1e6)
            scale_k = max(1.0, k_max)
            assert abs(scale_stiffness(lam_min, lam_min, lam_max, k_min, k_max)
                       - k_min) <= 1e-12 * scale_k
            assert abs(scale_stiffness(lam_max, lam_min, lam_max, k_min, k_max)
                       - k_max) <= 1e-12 * scale_k
            lam_mid = np.sqrt(lam_min) * np.sqrt(lam_max)
            assert abs(scale_stiffness(lam_mid, lam_min, lam_max, k_min, k_max)
                       - 0.5 * (k_min + k_max)) <= 1e-9 * scale_k

    def test_bounds_containment_random_profiles(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            lam_min = rng.uniform(0.1, 10)
            lam_max = lam_min * rng.uniform(1.5, 100)
            lam = rng.uniform(lam_min, lam_max, size=200)
            k = scale_stiffness(lam, lam_min, lam_max, 100.0, 1000.0)
            assert np.all(k >= 100.0 - 1e-9)
            assert np.all(k <= 1000.0 + 1e-9)

    def test_monotone_in_lambda(self):
        lam = np.linspace(1.0, 100.0, 300)
        k = scale_stiffness(lam, 1.0, 100.0, 100.0, 1000.0)
        assert np.all(np.diff(k) > 0)

    def test_affine_invariance(self):
        rng = np.random.default_rng(1)
        lam = rng.uniform(1.0, 100.0, size=50)
        k = scale_stiffness(lam, 1.0, 100.0, 200.0, 900.0)
        a, b = 3.0, 40.0
        k2 = scale_stiffness(lam, 1.0, 100.0, a * 200.0 + b, a * 900.0 + b)
        np.testing.assert_allclose(k2, a * k + b, rtol=1e-12)

    def test_continuity_bounded_differences(self):
        lam = np.exp(np.linspace(0.0, 4.0, 1000))
        k = scale_stiffness(lam, lam[0], lam[-1], 0.0, 1000.0)
        # log-scaling turns the exponential ramp into a linear one
        np.testing.assert_allclose(np.diff(k), np.diff(k)[0], rtol=1e-9)

    def test_degenerate_extremes_rejected(self):
        with pytest.raises(DegenerateProfileError):
            scale_stiffness(1.0, 5.0, 5.0, 0.0, 100.0)

    def test_nonpositive_lambda_rejected(self):
        with pytest.raises(ValidationError):
            scale_stiffness(-1.0, 1.0, 100.0, 0.0, 100.0)


class TestProfile:
    def test_build_profile_extremes(self, task_model):
        sol = ControllerSolution(k_max=1000, k_min=100, d=50, h=2)
        profile = build_profile(task_model, sol)
        lam = task_model.compliance
        assert profile.lambda_min == pytest.approx(lam.min())
        assert profile.lambda_max == pytest.approx(lam.max())
        i_max = np.argmax(lam)
        assert profile.k[i_max] == pytest.approx(1000.0, abs=1e-9)
        assert profile.k.min() >= 100.0 - 1e-9

    def test_constant_variance_is_degenerate(self):
        model = make_flat_model()
        sol = ControllerSolution(k_max=1000, k_min=100, d=50, h=2)
        with pytest.raises(DegenerateProfileError):
            build_profile(model, sol)

    def test_zero_order_hold_sampling(self):
        profile = StiffnessProfile(grid=np.array([0.0, 1.0, 2.0]),
                                   k=np.array([10.0, 20.0, 30.0]),
                                   lambda_min=1.0, lambda_max=2.0)
        np.testing.assert_array_equal(profile.k_at(np.array([0.0, 0.5, 1.0, 1.7, 2.5])),
                                      [10.0, 10.0, 20.0, 20.0, 30.0])

    def test_csv_export(self, task_model, tmp_path):
        sol = ControllerSolution(k_max=1000, k_min=100, d=50, h=2)
        profile = build_profile(task_model, sol)
        path = tmp_path / "profile.csv"
        write_profile_csv(profile, task_model, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,lambda,k"
        assert len(lines) == task_model.grid.size + 1
        t0, lam0, k0 = map(float, lines[1].split(","))
        assert t0 == task_model.grid[0]
        assert lam0 == pytest.approx(task_model.compliance[0])
        assert k0 == pytest.approx(profile.k[0])
