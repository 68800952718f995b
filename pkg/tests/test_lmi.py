import math

import numpy as np
import pytest

from vicdesign.errors import ValidationError
from vicdesign.lmi import (P_VARS, build_dstab_region, dstab_blocks, dump_blocks_json,
                           effort_error_blocks, lyapunov_blocks, positivity_block,
                           region_blocks, region_membership, spiral_point,
                           stability_blocks)
from vicdesign.polytope import build_polytope
from vicdesign.sdp import SdpProblem, min_effort, solve
from vicdesign.stiffness import ControllerSolution

# 50-digit mpmath evaluation of the region constants at 5% overshoot
XI_5PCT = 0.6901067305598217
PHI_5PCT = 0.8091598069549493
A0_5PCT = -0.05
A_SE_5PCT = 0.475
A_E_5PCT = 0.525
B_SPIRAL_5PCT = 0.049780778682655857
B_E_5PCT = 0.11687886536265547
GAMMA_5PCT = 0.7832011374018931


def random_discrete_system(rng, radius_lo=0.3, radius_hi=1.7):
    a = rng.standard_normal((2, 2))
    rho = max(abs(np.linalg.eigvals(a)))
    return a * (rng.uniform(radius_lo, radius_hi) / rho)


def stability_problem(a, eps=1e-6):
    return SdpProblem(P_VARS, tuple(lyapunov_blocks([a], eps)), normalize_trace=True)


def region_problem(a, region, eps=1e-6):
    blocks = [positivity_block(eps)] + region_blocks([a], region)
    return SdpProblem(P_VARS, tuple(blocks), normalize_trace=True)


class TestRegionGeometry:
    def test_constants_at_five_percent(self):
        region = build_dstab_region(5.0)
        assert region.xi_bar == pytest.approx(XI_5PCT, abs=1e-12)
        assert region.phi_angle == pytest.approx(PHI_5PCT, abs=1e-12)
        assert region.a0 == pytest.approx(A0_5PCT, abs=1e-12)
        assert region.a_se == pytest.approx(A_SE_5PCT, abs=1e-12)
        assert region.a_e == pytest.approx(A_E_5PCT, abs=1e-12)
        assert region.intersection_b == pytest.approx(B_SPIRAL_5PCT, abs=1e-11)
        assert region.b_e == pytest.approx(B_E_5PCT, abs=1e-10)
        assert region.gamma == pytest.approx(GAMMA_5PCT, abs=1e-11)

    def test_real_axis_crossing_equals_minus_overshoot(self):
        # algebraic identity: pi/tan(phi) = -log(os/100), so a0 = -os/100
        for os_bar in (0.5, 2.0, 5.0, 20.0, 60.0):
            region = build_dstab_region(os_bar)
            assert region.a0 == pytest.approx(-os_bar / 100.0, rel=1e-12)

    def test_classical_overshoot_relation_round_trip(self):
        for os_bar in (1.0, 5.0, 25.0):
            region = build_dstab_region(os_bar)
            xi = region.xi_bar
            back = 100.0 * math.exp(-math.pi * xi / math.sqrt(1.0 - xi * xi))
            assert back == pytest.approx(os_bar, rel=1e-12)

    def test_damping_limits(self):
        assert build_dstab_region(99.999).xi_bar < 1e-4
        assert build_dstab_region(1e-6).xi_bar > 0.98

    def test_domain_errors(self):
        for bad in (0.0, -1.0, 100.0, 150.0):
            with pytest.raises(ValidationError):
                build_dstab_region(bad)

    def test_intersection_point_on_both_boundaries(self):
        region = build_dstab_region(5.0)
        a, b = region.intersection_a, region.intersection_b
        ellipse = ((a - region.a_se) / region.a_e) ** 2 + (b / region.b_e) ** 2
        assert ellipse == pytest.approx(1.0, abs=1e-9)
        cone = abs(b) - math.tan(region.gamma) * (1.0 - a)
        assert cone == pytest.approx(0.0, abs=1e-9)
        # on the spiral itself
        tan_phi = math.tan(region.phi_angle)
        w = math.atan2(b, a)  # small angle, first branch
        assert math.exp(-w / tan_phi) * math.cos(w) == pytest.approx(a, abs=1e-9)

    def test_spiral_point_matches_bisection_tolerance(self):
        a, b = spiral_point(PHI_5PCT, 0.95)
        assert a == 0.95
        assert b == pytest.approx(B_SPIRAL_5PCT, abs=1e-11)


class TestMembership:
    def test_center_inside(self):
        region = build_dstab_region(5.0)
        assert region_membership(region, complex(region.a_se, 0.0))

    def test_cone_vertex_excluded(self):
        region = build_dstab_region(5.0)
        assert not region_membership(region, complex(1.0, 0.0))

    def test_intersection_point_excluded_strictly(self):
        region = build_dstab_region(5.0)
        z = complex(region.intersection_a, region.intersection_b)
        assert not region_membership(region, z)
        # nudging inward flips the verdict
        assert region_membership(region, complex(region.intersection_a - 1e-6,
                                                 region.intersection_b - 1e-6))

    def test_conjugate_symmetry(self):
        region = build_dstab_region(5.0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            z = complex(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2))
            assert region_membership(region, z) == region_membership(region, z.conjugate())


class TestBlockAssembly:
    def test_all_blocks_symmetric(self, task_model):
        sol = ControllerSolution(k_max=3000, k_min=500, d=400, h=2)
        poly = build_polytope(sol, 1e-3)
        region = build_dstab_region(5.0)
        blocks = (stability_blocks(poly)
                  + effort_error_blocks(poly, 0.03, np.array([0.0, 0.01]))
                  + dstab_blocks(poly, region))
        rng = np.random.default_rng(1)
        assignment = {"p11": 3.0, "p12": -1.0, "p22": 2.0, "t": 5.0}
        for b in blocks:
            value = b.value(assignment)
            np.testing.assert_allclose(value, value.T, atol=1e-12)
            for mat in b.coeffs.values():
                np.testing.assert_allclose(mat, mat.T, atol=1e-12)

    def test_block_sizes(self):
        sol = ControllerSolution(k_max=3000, k_min=500, d=400, h=2)
        poly = build_polytope(sol, 1e-3)
        region = build_dstab_region(5.0)
        stab = stability_blocks(poly)
        assert [b.size for b in stab] == [2, 2, 2]  # positivity + 2 vertices
        ee = effort_error_blocks(poly, 0.03, np.array([0.0, 0.01]))
        assert [b.size for b in ee] == [3, 3, 3, 3, 3]  # (8a),(8b) x2 + (9)
        ds = dstab_blocks(poly, region)
        assert [b.size for b in ds] == [8, 8]

    def test_identity_matrix_gives_equality(self):
        # A = I makes the Schur block vanish for every P
        blocks = lyapunov_blocks([np.eye(2)])
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.standard_normal((2, 2))
            p = p @ p.T
            assignment = {"p11": p[0, 0], "p12": p[0, 1], "p22": p[1, 1]}
            np.testing.assert_allclose(blocks[1].value(assignment), 0.0, atol=1e-12)

    def test_effort_block_linear_in_t(self):
        sol = ControllerSolution(k_max=3000, k_min=500, d=400, h=2)
        poly = build_polytope(sol, 1e-3)
        blocks = effort_error_blocks(poly, 0.03, np.array([0.0, 0.01]))
        effort = [b for b in blocks if b.name.startswith("effort")]
        assert all("t" in b.coeffs for b in effort)
        for b in effort:
            np.testing.assert_array_equal(b.coeffs["t"], np.diag([1.0, 0.0, 0.0]))

    def test_zero_initial_state_always_member(self):
        sol = ControllerSolution(k_max=3000, k_min=500, d=400, h=2)
        poly = build_polytope(sol, 1e-3)
        blocks = effort_error_blocks(poly, 0.03, np.zeros(2))
        init = [b for b in blocks if b.name == "initial_state"][0]
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = rng.standard_normal((2, 2))
            p = p @ p.T + 1e-6 * np.eye(2)
            assignment = {"p11": p[0, 0], "p12": p[0, 1], "p22": p[1, 1]}
            assert init.min_eig(assignment) >= -1e-12

    def test_homogeneity_of_stability_and_region(self):
        rng = np.random.default_rng(7)
        region = build_dstab_region(5.0)
        a = random_discrete_system(rng, 0.4, 0.6)
        stab = lyapunov_blocks([a], eps=0.0)[1]
        ds = region_blocks([a], region)[0]
        p = np.array([[2.0, 0.3], [0.3, 1.0]])
        for c in (0.5, 3.0, 100.0):
            for block in (stab, ds):
                base = block.min_eig({"p11": p[0, 0], "p12": p[0, 1], "p22": p[1, 1]})
                scaled = block.min_eig({"p11": c * p[0, 0], "p12": c * p[0, 1],
                                        "p22": c * p[1, 1]})
                assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-12)

    def test_json_dump(self, tmp_path):
        import json
        blocks = lyapunov_blocks([np.eye(2) * 0.5])
        path = tmp_path / "blocks.json"
        dump_blocks_json(blocks, path)
        data = json.loads(path.read_text())
        assert data[0]["name"] == "p_positive"
        assert data[1]["size"] == 2


class TestFeasibilityVsEigenvalues:
    def test_stability_matches_spectral_radius(self):
        rng = np.random.default_rng(42)
        for _ in range(150):
            a = random_discrete_system(rng)
            rho = max(abs(np.linalg.eigvals(a)))
            if abs(rho - 1.0) <= 1e-6:
                continue
            sol = solve(stability_problem(a), tol=1e-9)
            assert sol.ok == (rho <= 1.0), f"rho={rho}, status={sol.status}"

    def test_unstable_vertex_infeasible(self):
        a = np.array([[1.05, 0.0], [0.0, 0.5]])
        assert solve(stability_problem(a), tol=1e-9).status == "infeasible"

    def test_dstab_deadbeat_feasible_alpha_negative_definite(self):
        region = build_dstab_region(5.0)
        alpha = region.alpha
        assert np.all(np.linalg.eigvalsh(alpha) < 0)
        # A = 0 reduces the region block to -alpha (x) P >= 0; check with P = I
        blocks = region_blocks([np.zeros((2, 2))], region)
        assignment = {"p11": 1.0, "p12": 0.0, "p22": 1.0}
        assert blocks[0].min_eig(assignment) > 0
        assert solve(region_problem(np.zeros((2, 2)), region), tol=1e-9).ok

    def test_dstab_critically_damped_feasible(self):
        region = build_dstab_region(5.0)
        a = np.array([[0.9, 0.001], [0.0, 0.9]])  # double real pole inside
        assert all(region_membership(region, complex(z)) for z in np.linalg.eigvals(a))
        assert solve(region_problem(a, region), tol=1e-9).ok

    def test_dstab_oscillatory_infeasible(self):
        region = build_dstab_region(5.0)
        th = 0.6
        a = 0.97 * np.array([[math.cos(th), math.sin(th)],
                             [-math.sin(th), math.cos(th)]])
        assert not all(region_membership(region, complex(z))
                       for z in np.linalg.eigvals(a))
        assert solve(region_problem(a, region), tol=1e-9).status == "infeasible"

    def test_dstab_matches_membership_randomized(self):
        rng = np.random.default_rng(11)
        region = build_dstab_region(5.0)
        agree = 0
        total = 150
        for _ in range(total):
            if rng.uniform() < 0.5:
                a = random_discrete_system(rng, 0.2, 1.25)
            else:
                r, th = rng.uniform(0.2, 1.1), rng.uniform(0, np.pi)
                rot = r * np.array([[math.cos(th), math.sin(th)],
                                    [-math.sin(th), math.cos(th)]])
                q = rng.standard_normal((2, 2)) + 2 * np.eye(2)
                a = q @ rot @ np.linalg.inv(q)
            inside = all(region_membership(region, complex(z))
                         for z in np.linalg.eigvals(a))
            sol = solve(region_problem(a, region), tol=1e-9)
            agree += (sol.ok == inside)
        assert agree >= int(0.99 * total)


class TestExhaustiveSwitchingBound:
    def test_ten_step_vertex_switching_respects_certificate(self, task_model):
        sol = ControllerSolution(k_max=3000, k_min=800, d=300, h=2)
        poly = build_polytope(sol, 1e-3)
        x0 = np.array([0.0, task_model.d_mean[0]])
        dp_max = 0.0319
        blocks = stability_blocks(poly) + effort_error_blocks(poly, dp_max, x0)
        problem = SdpProblem(P_VARS + ("t",), tuple(blocks))
        result = min_effort(problem, t_hi=100.0)
        assert result.ok
        p, t_star = result.p_matrix, result.t_value
        u_cap = math.sqrt(t_star) + 1e-6
        assert float(x0 @ p @ x0) <= 1.0 + 1e-9
        for seq in range(2 ** 10):
            x = x0.copy()
            for k in range(10):
                v = poly.vertices[(seq >> k) & 1]
                assert abs(float(v.w_disc @ x)) <= u_cap
                x = v.a_disc @ x
                assert abs(x[0]) <= dp_max + 1e-6
