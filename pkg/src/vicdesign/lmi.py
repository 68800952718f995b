"""Constraint blocks for the controller certification problem.

Each block states that a symmetric matrix, affine in the decision variables
(the three entries of the 2x2 symmetric certificate P and optionally the
squared effort ceiling t), must be positive semidefinite.  The catalog covers
common-certificate Schur stability across the vertex systems, invariant-
ellipsoid effort/error/initial-state bounds, and pole confinement to an
ellipse-cone approximation of the constant-overshoot spiral region.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .polytope import PolytopicVic
from .validation import check_in_range

P_VARS = ("p11", "p12", "p22")

# symmetric basis of P: P = p11*E11 + p12*E12 + p22*E22
_E = {
    "p11": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "p12": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "p22": np.array([[0.0, 0.0], [0.0, 1.0]]),
}

PD_MARGIN = 1e-9  # strictness margin for P > 0 constraints


def p_from_vars(p11: float, p12: float, p22: float) -> np.ndarray:
    return np.array([[p11, p12], [p12, p22]])


@dataclass(frozen=True)
class LmiBlock:
    """Affine PSD constraint: const + sum_i var_i * coeff_i >= 0."""

    name: str
    const: np.ndarray
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        const = np.asarray(self.const, dtype=float)
        if const.ndim != 2 or const.shape[0] != const.shape[1]:
            raise ValueError(f"{self.name}: const must be square")
        if not np.allclose(const, const.T, atol=1e-12):
            raise ValueError(f"{self.name}: const must be symmetric")
        coeffs = {}
        for var, mat in self.coeffs.items():
            mat = np.asarray(mat, dtype=float)
            if mat.shape != const.shape:
                raise ValueError(f"{self.name}: coefficient of {var} has wrong shape")
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{self.name}: coefficient of {var} must be symmetric")
            coeffs[var] = mat
        object.__setattr__(self, "const", const)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def value(self, assignment: dict) -> np.ndarray:
        out = self.const.copy()
        for var, mat in self.coeffs.items():
            out += assignment[var] * mat
        return out

    def min_eig(self, assignment: dict) -> float:
        return float(np.linalg.eigvalsh(self.value(assignment))[0])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "size": self.size,
            "const": self.const.tolist(),
            "coeffs": {k: v.tolist() for k, v in self.coeffs.items()},
        }


def dump_blocks_json(blocks, path) -> None:
    Path(path).write_text(
        json.dumps([b.to_dict() for b in blocks], indent=2), encoding="utf-8")


def positivity_block(eps: float = PD_MARGIN) -> LmiBlock:
    """P - eps*I >= 0, the closed surrogate of strict positive definiteness."""
    return LmiBlock("p_positive", -eps * np.eye(2), {v: _E[v] for v in P_VARS})


def lyapunov_blocks(matrices, eps: float = PD_MARGIN) -> list[LmiBlock]:
    """Common-certificate Schur blocks P - A' P A >= 0 for explicit matrices.

    Classification studies against eigenvalue ground truth should pass a
    larger ``eps`` (say 1e-6): with a tiny floor, a near-singular P keeps the
    best achievable margin of an unstable system indistinguishable from zero.
    """
    blocks = [positivity_block(eps)]
    for i, a in enumerate(matrices):
        a = np.asarray(a, dtype=float)
        coeffs = {var: _E[var] - a.T @ _E[var] @ a for var in P_VARS}
        blocks.append(LmiBlock(f"stability_v{i}", np.zeros((2, 2)), coeffs))
    return blocks


def stability_blocks(poly: PolytopicVic, eps: float = PD_MARGIN) -> list[LmiBlock]:
    """Common-certificate Schur condition P - A_i' P A_i >= 0 per vertex."""
    return lyapunov_blocks([v.a_disc for v in poly.vertices], eps)


def effort_error_blocks(poly: PolytopicVic, dp_max: float, x0: np.ndarray,
                        t_fixed: float | None = None) -> list[LmiBlock]:
    """Effort ceiling, error ceiling and initial-state membership blocks.

    The effort blocks are affine in the decision variable ``t`` (the squared
    ceiling); passing ``t_fixed`` bakes a numeric value into the constant part
    instead, which is how the bisection probes are built.
    """
    if not dp_max > 0:
        raise ValueError(f"dp_max must be positive, got {dp_max}")
    x0 = np.asarray(x0, dtype=float).reshape(2)
    s_row = poly.selection_s
    blocks = []
    for i, v in enumerate(poly.vertices):
        w = v.w_disc
        const = np.zeros((3, 3))
        const[0, 1:] = w
        const[1:, 0] = w
        coeffs = {var: _pad_lower_right(_E[var]) for var in P_VARS}
        if t_fixed is None:
            coeffs["t"] = np.diag([1.0, 0.0, 0.0])
        else:
            const[0, 0] = t_fixed
        blocks.append(LmiBlock(f"effort_v{i}", const, coeffs))

        sa = (s_row @ v.a_disc).reshape(2)
        const_e = np.zeros((3, 3))
        const_e[2, 2] = dp_max ** 2
        const_e[2, :2] = sa
        const_e[:2, 2] = sa
        coeffs_e = {var: _pad_upper_left(_E[var]) for var in P_VARS}
        blocks.append(LmiBlock(f"error_v{i}", const_e, coeffs_e))

    const0 = np.zeros((3, 3))
    const0[0, 0] = 1.0
    coeffs0 = {}
    for var in P_VARS:
        mat = np.zeros((3, 3))
        px = _E[var] @ x0
        mat[0, 1:] = px
        mat[1:, 0] = px
        mat[1:, 1:] = _E[var]
        coeffs0[var] = mat
    blocks.append(LmiBlock("initial_state", const0, coeffs0))
    return blocks


def _pad_lower_right(m2: np.ndarray) -> np.ndarray:
    out = np.zeros((3, 3))
    out[1:, 1:] = m2
    return out


def _pad_upper_left(m2: np.ndarray) -> np.ndarray:
    out = np.zeros((3, 3))
    out[:2, :2] = m2
    return out


# -- overshoot region geometry -------------------------------------------


@dataclass(frozen=True)
class DStabRegion:
    """Ellipse-cone approximation of the constant-damping spiral region."""

    os_bar: float
    xi_bar: float
    phi_angle: float
    a0: float
    a_se: float
    a_e: float
    b_e: float
    gamma: float
    intersection_a: float
    intersection_b: float

    @property
    def alpha(self) -> np.ndarray:
        ae = np.array([[-1.0, -self.a_se / self.a_e], [-self.a_se / self.a_e, -1.0]])
        av = -2.0 * math.sin(self.gamma) * np.eye(2)
        out = np.zeros((4, 4))
        out[:2, :2] = ae
        out[2:, 2:] = av
        return out

    @property
    def beta(self) -> np.ndarray:
        be = 0.5 * np.array([[0.0, 1.0 / self.a_e - 1.0 / self.b_e],
                             [1.0 / self.a_e + 1.0 / self.b_e, 0.0]])
        bv = np.array([[math.sin(self.gamma), math.cos(self.gamma)],
                       [-math.cos(self.gamma), math.sin(self.gamma)]])
        out = np.zeros((4, 4))
        out[:2, :2] = be
        out[2:, 2:] = bv
        return out

    def to_dict(self) -> dict:
        return {
            "os_bar": self.os_bar, "xi_bar": self.xi_bar, "phi_angle": self.phi_angle,
            "a0": self.a0, "a_se": self.a_se, "a_e": self.a_e, "b_e": self.b_e,
            "gamma": self.gamma,
            "intersection": [self.intersection_a, self.intersection_b],
        }


def spiral_point(phi_angle: float, abscissa: float, tol: float = 1e-12) -> tuple[float, float]:
    """Point of the upper constant-damping spiral branch at a given abscissa.

    The spiral is exp(-w/tan(phi)) * (cos w, sin w) for w in [0, pi]; the
    smallest positive w with matching real part is found by bisection.
    """
    tan_phi = math.tan(phi_angle)

    def real_part(w: float) -> float:
        return math.exp(-w / tan_phi) * math.cos(w)

    lo, hi = 0.0, math.pi / 2
    # real part decreases from 1 to <=0 over [0, pi/2]
    if not (real_part(lo) >= abscissa >= real_part(hi)):
        raise ValueError(f"abscissa {abscissa} not reachable on the spiral branch")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if real_part(mid) >= abscissa:
            lo = mid
        else:
            hi = mid
    w = 0.5 * (lo + hi)
    return abscissa, math.exp(-w / tan_phi) * math.sin(w)


def build_dstab_region(os_bar: float, intersection_a: float = 0.95) -> DStabRegion:
    """Region constants for a maximum percentage overshoot ``os_bar``."""
    check_in_range(os_bar, 0.0, 100.0, "os_bar", strict_lo=True, strict_hi=True)
    log_os = math.log(os_bar / 100.0)
    xi_bar = -log_os / math.sqrt(math.pi ** 2 + log_os ** 2)
    phi_angle = math.acos(xi_bar)
    a0 = -math.exp(-math.pi / math.tan(phi_angle))
    a_se = (1.0 + a0) / 2.0
    a_e = (1.0 - a0) / 2.0
    a, b = spiral_point(phi_angle, intersection_a)
    b_e = b * a_e / math.sqrt(a_e ** 2 - (a - a_se) ** 2)
    gamma = math.atan2(b, 1.0 - a)
    return DStabRegion(os_bar=os_bar, xi_bar=xi_bar, phi_angle=phi_angle, a0=a0,
                       a_se=a_se, a_e=a_e, b_e=b_e, gamma=gamma,
                       intersection_a=a, intersection_b=b)


def region_membership(region: DStabRegion, z: complex) -> bool:
    """Strict membership in both the ellipse and the left-opening cone."""
    x, y = z.real, z.imag
    in_ellipse = ((x - region.a_se) / region.a_e) ** 2 + (y / region.b_e) ** 2 < 1.0
    in_cone = x < 1.0 and abs(y) < math.tan(region.gamma) * (1.0 - x)
    return bool(in_ellipse and in_cone)


def region_blocks(matrices, region: DStabRegion) -> list[LmiBlock]:
    """Negated region LMI -(a (x) P + b (x) PA + b' (x) A'P) >= 0 per matrix."""
    alpha, beta = region.alpha, region.beta
    blocks = []
    for i, a in enumerate(matrices):
        a = np.asarray(a, dtype=float)
        coeffs = {}
        for var in P_VARS:
            e = _E[var]
            mat = np.kron(alpha, e) + np.kron(beta, e @ a) + np.kron(beta.T, a.T @ e)
            coeffs[var] = -mat
        blocks.append(LmiBlock(f"dstab_v{i}", np.zeros((8, 8)), coeffs))
    return blocks


def dstab_blocks(poly: PolytopicVic, region: DStabRegion) -> list[LmiBlock]:
    """Region confinement blocks for every vertex of the polytope."""
    return region_blocks([v.a_disc for v in poly.vertices], region)
