"""LPV state-space of the controller, its bounding-box polytope and ZOH forms.

The error dynamics have a single varying entry, the stiffness-over-inertia
ratio, so the scheduling space is an interval and the polytope has exactly two
vertex systems.  Each vertex is a frozen LTI system discretized exactly under
zero-order hold; the feedback gain row is a sampled algebraic map and is not
transformed by the discretization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import ValidationError
from .stiffness import ControllerSolution
from .validation import check_positive


@dataclass(frozen=True)
class ContinuousVic:
    """Continuous-time LPV pieces: constant part, input paths, gain schedule."""

    d: float
    h: float
    phi_lo: float
    phi_hi: float

    @property
    def a0(self) -> np.ndarray:
        return np.array([[0.0, 1.0], [0.0, 0.0]])

    @property
    def b(self) -> np.ndarray:
        return np.array([[0.0], [1.0]])

    @property
    def b_f(self) -> np.ndarray:
        return np.array([[0.0], [1.0 / self.h]])

    def a_of_phi(self, phi: float) -> np.ndarray:
        return np.array([[0.0, 1.0], [phi, -self.d / self.h]])

    def w_of_phi(self, phi: float) -> np.ndarray:
        # First entry is phi itself so that a_of_phi == a0 + b @ w_of_phi and
        # w(phi) x is the acceleration the feedback commands.
        return np.array([phi, -self.d / self.h])


@dataclass(frozen=True)
class VertexSystem:
    """One frozen LTI vertex with its exact ZOH discretization."""

    vertex_phi: float
    a_cont: np.ndarray
    w_cont: np.ndarray
    a_disc: np.ndarray
    w_disc: np.ndarray
    b_f_disc: np.ndarray


@dataclass(frozen=True)
class PolytopicVic:
    """Two-vertex polytope enclosing every admissible stiffness value."""

    vertices: tuple[VertexSystem, ...]
    ts: float
    continuous: ContinuousVic

    @property
    def selection_s(self) -> np.ndarray:
        """Row selecting the position error from the state."""
        return np.array([[1.0, 0.0]])

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "phi_bounds": [self.continuous.phi_lo, self.continuous.phi_hi],
            "vertices": [
                {
                    "phi": v.vertex_phi,
                    "a_cont": v.a_cont.tolist(),
                    "w_cont": v.w_cont.tolist(),
                    "a_disc": v.a_disc.tolist(),
                    "w_disc": v.w_disc.tolist(),
                    "b_f_disc": v.b_f_disc.tolist(),
                }
                for v in self.vertices
            ],
        }

    def dump_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def zoh_discretize(a: np.ndarray, b: np.ndarray, ts: float):
    """Exact zero-order-hold pair (A_d, B_d) via the augmented exponential."""
    n = a.shape[0]
    m = b.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    phi = expm(block * ts)
    return phi[:n, :n], phi[:n, n:]


def eval_state_matrix(sol: ControllerSolution, k_now: float) -> np.ndarray:
    """Continuous state matrix at one admissible stiffness value."""
    slack = 1e-9 * max(1.0, sol.k_max)
    if not (sol.k_min - slack <= k_now <= sol.k_max + slack):
        raise ValidationError(
            f"stiffness {k_now} outside the admissible range [{sol.k_min}, {sol.k_max}]")
    return np.array([[0.0, 1.0], [-k_now / sol.h, -sol.d / sol.h]])


def build_polytope(sol: ControllerSolution, ts: float) -> PolytopicVic:
    """Bounding-box polytope of the scheduling interval, ZOH-discretized."""
    check_positive(ts, "ts")
    phi_lo = -sol.k_max / sol.h
    phi_hi = -sol.k_min / sol.h
    cont = ContinuousVic(d=sol.d, h=sol.h, phi_lo=phi_lo, phi_hi=phi_hi)
    vertices = []
    for phi in (phi_lo, phi_hi):
        a_c = cont.a_of_phi(phi)
        w = cont.w_of_phi(phi)
        a_d, b_f_d = zoh_discretize(a_c, cont.b_f, ts)
        vertices.append(VertexSystem(
            vertex_phi=phi, a_cont=a_c, w_cont=w,
            a_disc=a_d, w_disc=w.copy(), b_f_disc=b_f_d))
    return PolytopicVic(vertices=tuple(vertices), ts=float(ts), continuous=cont)


def hull_weight(poly: PolytopicVic, k_now: float) -> float:
    """Convex weight placing the state matrix at k_now between the vertices.

    Returns w in [0, 1] with A(k_now) = w * A(lo) + (1 - w) * A(hi).
    """
    phi = -k_now / poly.continuous.h
    lo, hi = poly.continuous.phi_lo, poly.continuous.phi_hi
    if not (lo - 1e-12 <= phi <= hi + 1e-12):
        raise ValidationError(f"stiffness {k_now} leaves the scheduling interval")
    if hi == lo:
        return 1.0
    return float((hi - phi) / (hi - lo))
