"""User-preference scoring and per-candidate condition assessment.

The preference heuristic is a Gaussian field over the (K_max, K_min) plane:
its major axis leaves the lower corner of the admissible box at an angle set
by Similarity (1 hugs the K_max = K_min diagonal, 0 lies along the K_max
axis), the center sits along that axis at a fraction set by Scale, and the
standard deviations are half the center-to-corner and center-to-boundary
distances.  The field value is a cost in [0, 1], zero at the center.

Assessment composes the pipeline for one candidate: stiffness profile,
polytope, constraint blocks for the selected design variant, certification
solve, and safety/performance aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .errors import ValidationError
from .hgp import TaskModel, extract_dp_max
from .lmi import (P_VARS, build_dstab_region, dstab_blocks, effort_error_blocks,
                  region_membership, stability_blocks)
from .polytope import build_polytope, zoh_discretize, eval_state_matrix
from .sdp import SdpProblem, min_effort, solve
from .stiffness import ControllerSolution, build_profile
from .validation import check_in_range

SIGMA_FLOOR_FRACTION = 0.01  # of the stiffness span, keeps fields non-degenerate


class DesignVariant(Enum):
    """Constraint sets, each a superset of the previous one."""

    A = "A"  # preference only
    B = "B"  # + common-certificate stability
    C = "C"  # + effort/error/initial-state bounds
    D = "D"  # + overshoot pole region

    @classmethod
    def parse(cls, value) -> "DesignVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValidationError(f"unknown design variant {value!r}; expected A, B, C or D")


@dataclass(frozen=True)
class UserPreference:
    similarity: float
    scale: float
    k_lower: float
    k_upper: float

    def __post_init__(self):
        check_in_range(self.similarity, 0.0, 1.0, "similarity")
        check_in_range(self.scale, 0.0, 1.0, "scale")
        if not self.k_upper > self.k_lower >= 0:
            raise ValidationError(
                f"stiffness bounds must satisfy 0 <= k_lower < k_upper, "
                f"got [{self.k_lower}, {self.k_upper}]")


@dataclass(frozen=True)
class PreferenceField:
    center: np.ndarray       # (K_max, K_min) of the zero-cost point
    axis_major: np.ndarray   # unit vector of the major axis
    sigma_major: float
    sigma_minor: float
    k_lower: float
    k_upper: float

    @property
    def axis_minor(self) -> np.ndarray:
        return np.array([-self.axis_major[1], self.axis_major[0]])


def _ray_exit(origin: np.ndarray, direction: np.ndarray,
              k_lower: float, k_upper: float) -> float:
    """Distance from origin along direction to the admissible-set boundary.

    The admissible set in the (K_max, K_min) plane is the box intersected
    with the closed half-plane K_min <= K_max.
    """
    hits = []
    for rate, room in (
        (direction[0], k_upper - origin[0]),
        (-direction[0], origin[0] - k_lower),
        (direction[1], k_upper - origin[1]),
        (-direction[1], origin[1] - k_lower),
        (direction[1] - direction[0], origin[0] - origin[1]),  # K_min <= K_max
    ):
        if rate > 1e-15:
            hits.append(max(room, 0.0) / rate)
    return min(hits) if hits else math.inf


def build_field(pref: UserPreference) -> PreferenceField:
    """Place the preference Gaussian inside the admissible triangle."""
    span = pref.k_upper - pref.k_lower
    floor = SIGMA_FLOOR_FRACTION * span
    psi = pref.similarity * (math.pi / 4.0)  # angle from the K_max axis
    u = np.array([math.cos(psi), math.sin(psi)])
    corner = np.array([pref.k_lower, pref.k_lower])
    axis_len = span / max(u[0], u[1])
    center = corner + pref.scale * axis_len * u
    sigma_major = max(0.5 * pref.scale * axis_len, floor)
    v = np.array([-u[1], u[0]])
    reach = min(_ray_exit(center, v, pref.k_lower, pref.k_upper),
                _ray_exit(center, -v, pref.k_lower, pref.k_upper))
    sigma_minor = max(0.5 * reach, floor)
    return PreferenceField(center=center, axis_major=u, sigma_major=sigma_major,
                           sigma_minor=sigma_minor,
                           k_lower=pref.k_lower, k_upper=pref.k_upper)


def f_perf(field: PreferenceField, sol) -> float:
    """Preference cost in [0, 1]; zero exactly at the field center."""
    if isinstance(sol, ControllerSolution):
        point = np.array([sol.k_max, sol.k_min])
    else:
        point = np.asarray(sol, dtype=float)
    q = point - field.center
    qm = float(q @ field.axis_major)
    qn = float(q @ field.axis_minor)
    arg = 0.5 * ((qm / field.sigma_major) ** 2 + (qn / field.sigma_minor) ** 2)
    return float(1.0 - math.exp(-arg))


@dataclass(frozen=True)
class SuitabilityScore:
    """Cost aggregate; lower is better, rejected candidates score 1."""

    f_perf: float
    f_safety: float | None = None

    @property
    def f_s(self) -> float:
        if self.f_safety is None:
            return self.f_perf
        return 0.5 * (self.f_safety + self.f_perf)

    def to_dict(self) -> dict:
        return {"f_perf": self.f_perf, "f_safety": self.f_safety, "f_s": self.f_s}


@dataclass(frozen=True)
class DesignConfig:
    """All given parameters of one design session."""

    design: DesignVariant = DesignVariant.D
    h: float = 2.0
    ts: float = 1e-3
    k_lower: float = 0.0
    k_upper: float = 10000.0
    d_lower: float = 0.0
    d_upper: float = 2500.0
    u_max_bar: float = 10.0
    dp_max: float | str = "auto"
    os_bar: float = 5.0
    similarity: float = 0.5
    scale: float = 0.5
    seed: int = 0
    max_iters: int = 1000
    n_seed_points: int = 16
    eps_improve: float = 0.01
    stall_window: int = 75
    t_tol: float = 1e-4
    verify_profile: bool = True

    def preference(self) -> UserPreference:
        return UserPreference(similarity=self.similarity, scale=self.scale,
                              k_lower=self.k_lower, k_upper=self.k_upper)

    def resolve_dp_max(self, model: TaskModel) -> float:
        if isinstance(self.dp_max, str):
            if self.dp_max != "auto":
                raise ValidationError(f"dp_max must be a number or 'auto', got {self.dp_max!r}")
            return extract_dp_max(model)
        if not self.dp_max > 0:
            raise ValidationError(f"dp_max must be positive, got {self.dp_max}")
        return float(self.dp_max)

    def to_dict(self) -> dict:
        return {
            "design": self.design.value,
            "h_kg": self.h,
            "ts_s": self.ts,
            "k_bounds_n_per_m": [self.k_lower, self.k_upper],
            "d_bounds_n_s_per_m": [self.d_lower, self.d_upper],
            "u_max_bar_n_per_kg": self.u_max_bar,
            "dp_max_m": self.dp_max,
            "os_bar_pct": self.os_bar,
            "similarity": self.similarity,
            "scale": self.scale,
            "seed": self.seed,
            "max_iters": self.max_iters,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignConfig":
        kw = {}
        mapping = {
            "design": ("design", DesignVariant.parse),
            "h_kg": ("h", float),
            "ts_s": ("ts", float),
            "u_max_bar_n_per_kg": ("u_max_bar", float),
            "os_bar_pct": ("os_bar", float),
            "similarity": ("similarity", float),
            "scale": ("scale", float),
            "seed": ("seed", int),
            "max_iters": ("max_iters", int),
            "n_seed_points": ("n_seed_points", int),
            "eps_improve": ("eps_improve", float),
            "stall_window": ("stall_window", int),
            "t_tol": ("t_tol", float),
            "verify_profile": ("verify_profile", bool),
        }
        for key, (name, conv) in mapping.items():
            if key in d:
                kw[name] = conv(d[key])
        if "dp_max_m" in d:
            v = d["dp_max_m"]
            kw["dp_max"] = v if isinstance(v, str) else float(v)
        if "k_bounds_n_per_m" in d:
            kw["k_lower"], kw["k_upper"] = map(float, d["k_bounds_n_per_m"])
        if "d_bounds_n_s_per_m" in d:
            kw["d_lower"], kw["d_upper"] = map(float, d["d_bounds_n_s_per_m"])
        known = set(mapping) | {"dp_max_m", "k_bounds_n_per_m", "d_bounds_n_s_per_m"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown design config keys: {sorted(unknown)}")
        return cls(**kw)


@dataclass(frozen=True)
class AssessmentResult:
    score: SuitabilityScore
    status: str                      # ok | rejected_bounds | infeasible | sweep_failed | numerical_failure
    lmi_feasible: bool | None = None
    p_matrix: np.ndarray | None = None
    t_value: float | None = None
    u_max: float | None = None
    dp_max_used: float | None = None

    @property
    def accepted(self) -> bool:
        return self.status == "ok"


def initial_state(model: TaskModel) -> np.ndarray:
    """Start at the reference with null velocity: e = 0, de = reference rate."""
    return np.array([0.0, model.d_mean[0]])


def certificate_warm_start(poly, x0: np.ndarray) -> np.ndarray:
    """P entries of the right magnitude from a mid-vertex Lyapunov solve."""
    a_mid = 0.5 * (poly.vertices[0].a_disc + poly.vertices[1].a_disc)
    pl = solve_discrete_lyapunov(a_mid.T, np.eye(2))
    c = 0.9 / max(float(x0 @ pl @ x0), 1e-30)
    return c * np.array([pl[0, 0], pl[0, 1], pl[1, 1]])


def verify_profile_certificate(sol: ControllerSolution, profile_k: np.ndarray,
                               p: np.ndarray, dp_max: float, ts: float,
                               region=None, check_error: bool = True,
                               tol: float = 1e-8) -> bool:
    """Re-check the certificate on every stiffness value the profile visits.

    The vertex LMIs cover the scheduling interval of the continuous system
    exactly, but zero-order-hold discretization is nonlinear in K, so the
    frozen matrices between the vertices are re-verified directly: Lyapunov
    decrease, the one-step error bound, and (when a pole region is given)
    eigenvalue membership.  The effort bound needs no sweep: its block is
    affine in the gain row.
    """
    s_row = np.array([1.0, 0.0])
    p_scale = float(np.abs(p).max())
    p_inv = np.linalg.inv(p)
    for k_now in np.unique(profile_k):
        a_c = eval_state_matrix(sol, float(k_now))
        a_d, _ = zoh_discretize(a_c, np.array([[0.0], [1.0 / sol.h]]), ts)
        lyap = p - a_d.T @ p @ a_d
        if float(np.linalg.eigvalsh(lyap)[0]) < -tol * p_scale:
            return False
        if check_error:
            sa = s_row @ a_d
            if float(sa @ p_inv @ sa) > dp_max ** 2 * (1 + 1e-9) + tol:
                return False
        if region is not None:
            for z in np.linalg.eigvals(a_d):
                if not region_membership(region, complex(z)):
                    return False
    return True


def assess(sol: ControllerSolution, model: TaskModel, design, cfg: DesignConfig,
           pref_field: PreferenceField | None = None) -> AssessmentResult:
    """Score one candidate under a design variant.

    Rejected or infeasible candidates score 1 (the worst cost).  For designs
    with effort constraints the safety score is the certified effort ceiling
    normalized by its allowed maximum.
    """
    design = DesignVariant.parse(design)
    field_ = pref_field if pref_field is not None else build_field(cfg.preference())

    in_bounds = (cfg.k_lower <= sol.k_min < sol.k_max <= cfg.k_upper
                 and cfg.d_lower <= sol.d <= cfg.d_upper)
    if not in_bounds:
        return AssessmentResult(score=SuitabilityScore(f_perf=1.0), status="rejected_bounds")

    perf = f_perf(field_, sol)
    if design is DesignVariant.A:
        return AssessmentResult(score=SuitabilityScore(f_perf=perf), status="ok",
                                lmi_feasible=None)

    profile = build_profile(model, sol)
    poly = build_polytope(sol, cfg.ts)
    dp_max = cfg.resolve_dp_max(model)
    x0 = initial_state(model)
    blocks = stability_blocks(poly)
    region = None

    if design is DesignVariant.B:
        problem = SdpProblem(tuple(P_VARS), tuple(blocks), objective="min_norm_p",
                             normalize_trace=True)
        result = solve(problem)
        t_value = None
        f_safety = None
    else:
        blocks = blocks + effort_error_blocks(poly, dp_max, x0)
        if design is DesignVariant.D:
            region = build_dstab_region(cfg.os_bar)
            blocks = blocks + dstab_blocks(poly, region)
        problem = SdpProblem(tuple(P_VARS) + ("t",), tuple(blocks))
        result = min_effort(problem, t_hi=cfg.u_max_bar ** 2, tol=cfg.t_tol,
                            warm_start=certificate_warm_start(poly, x0))
        t_value = result.t_value if result.ok else None
        f_safety = math.sqrt(t_value) / cfg.u_max_bar if result.ok else None

    if result.status == "numerical_failure":
        return AssessmentResult(score=SuitabilityScore(f_perf=1.0),
                                status="numerical_failure", lmi_feasible=None)
    if not result.ok:
        return AssessmentResult(score=SuitabilityScore(f_perf=1.0),
                                status="infeasible", lmi_feasible=False,
                                dp_max_used=dp_max)

    if cfg.verify_profile and not verify_profile_certificate(
            sol, profile.k, result.p_matrix, dp_max, cfg.ts, region=region,
            check_error=design is not DesignVariant.B):
        return AssessmentResult(score=SuitabilityScore(f_perf=1.0),
                                status="sweep_failed", lmi_feasible=True,
                                dp_max_used=dp_max)

    return AssessmentResult(
        score=SuitabilityScore(f_perf=perf, f_safety=f_safety),
        status="ok", lmi_feasible=True, p_matrix=result.p_matrix,
        t_value=t_value, u_max=math.sqrt(t_value) if t_value is not None else None,
        dp_max_used=dp_max)
