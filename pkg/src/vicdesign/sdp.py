"""Small dense semidefinite feasibility/optimization over the LMI blocks.

The decision space is tiny (the three entries of P, plus optionally the
squared effort ceiling), so the solver is a direct log-barrier path-following
method with exact dense linear algebra.  Feasibility is decided by maximizing
the worst block margin; the effort objective is handled by outer bisection on
the ceiling, one feasibility solve per probe.  Blocks of equal size are
stacked so each Newton step is a handful of batched operations.

Purely homogeneous constraint sets (stability, pole regions) admit the
degenerate certificate P -> 0; such problems must be built with
``normalize_trace=True``, which pins tr(P) and removes the scaling direction
by eliminating one variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lmi import LmiBlock, P_VARS, p_from_vars

DEFAULT_TOL = 1e-7
DEFAULT_T_TOL = 1e-4  # relative tolerance of the bisection on t
_S_CAP = 1e7
_STALL_IMPROVEMENT = 1e-10
_STALL_WINDOW = 50


@dataclass(frozen=True)
class SdpProblem:
    """Affine-PSD constraint set over named scalar variables."""

    variables: tuple
    blocks: tuple
    objective: str = "feasibility"  # or "min_norm_p"
    normalize_trace: bool = False
    trace_value: float = 1.0

    def __post_init__(self):
        if self.objective not in ("feasibility", "min_norm_p"):
            raise ValueError(f"unknown objective {self.objective!r}")
        names = set(self.variables)
        for b in self.blocks:
            extra = set(b.coeffs) - names
            if extra:
                raise ValueError(f"block {b.name} references undeclared variables {sorted(extra)}")
        if self.normalize_trace and not {"p11", "p22"} <= names:
            raise ValueError("normalize_trace needs both p11 and p22 among the variables")
        object.__setattr__(self, "blocks", tuple(self.blocks))


@dataclass
class SdpSolution:
    status: str  # optimal | feasible | infeasible | numerical_failure
    p_matrix: np.ndarray | None = None
    t_value: float | None = None
    max_residual: float = np.nan  # most negative block eigenvalue at the solution
    margin: float = np.nan        # best worst-case normalized margin found
    newton_iterations: int = 0
    assignment: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


def bind_t(blocks, t_value: float):
    """Freeze the effort ceiling into the constant parts of the blocks."""
    out = []
    for b in blocks:
        if "t" in b.coeffs:
            coeffs = {k: v for k, v in b.coeffs.items() if k != "t"}
            out.append(LmiBlock(b.name, b.const + t_value * b.coeffs["t"], coeffs))
        else:
            out.append(b)
    return out


def eliminate_trace(blocks, trace_value: float):
    """Substitute p22 = trace_value - p11 into every block."""
    out = []
    for b in blocks:
        const = b.const.copy()
        coeffs = {k: v.copy() for k, v in b.coeffs.items() if k not in ("p22",)}
        if "p22" in b.coeffs:
            c22 = b.coeffs["p22"]
            const = const + trace_value * c22
            coeffs["p11"] = coeffs.get("p11", np.zeros_like(c22)) - c22
        out.append(LmiBlock(b.name, const, coeffs))
    return out


def residuals(blocks, assignment: dict) -> float:
    """Most negative block eigenvalue, recomputed outside the solver path."""
    return min(b.min_eig(assignment) for b in blocks)


_PAD = 1e9  # diagonal padding of undersized blocks; never the binding margin


class _Barrier:
    """Batched Newton machinery over all blocks, padded to a common size.

    Padding adds constant eigenvalues of 1e9 (coefficients there are exactly
    zero), so it never binds the margin and only contributes an additive
    constant to the barrier; the shift variable sees it consistently in both
    the value and the derivatives.
    """

    def __init__(self, blocks, variables, box: float, var_scale=None):
        self.nv = len(variables)
        self.var_scale = np.ones(self.nv) if var_scale is None \
            else np.asarray(var_scale, dtype=float)
        self.box = box / self.var_scale if np.isfinite(box) else np.full(self.nv, np.inf)
        n = max(b.size for b in blocks)
        self.n = n
        k = len(blocks)
        consts = np.zeros((k, n, n))
        coeff = np.zeros((k, self.nv, n, n))
        scales = np.zeros(k)
        self.barrier_dim = 0
        # block scales keep raw margin semantics; var_scale only reconditions
        # the Newton system (the variables are y_scaled = y / var_scale)
        for j, b in enumerate(blocks):
            m = b.size
            self.barrier_dim += m
            scale = max(np.abs(b.const).max(),
                        max((np.abs(c).max() for c in b.coeffs.values()), default=0.0),
                        1e-30)
            scales[j] = scale
            consts[j, :m, :m] = b.const / scale
            if m < n:
                consts[j, m:, m:] = _PAD * np.eye(n - m)
            for i, v in enumerate(variables):
                if v in b.coeffs:
                    coeff[j, i, :m, :m] = b.coeffs[v] * (self.var_scale[i] / scale)
        self.c = consts
        self.a = coeff
        self.scales = scales
        self._eye = np.eye(n)

    def values(self, y: np.ndarray, s: float = 0.0) -> np.ndarray:
        g = self.c + np.einsum("v,kvij->kij", y, self.a)
        if s:
            g = g - s * self._eye
        return g

    @property
    def has_box(self) -> bool:
        return bool(np.all(np.isfinite(self.box)))

    def logdet(self, y: np.ndarray, s: float):
        try:
            chol = np.linalg.cholesky(self.values(y, s))
        except np.linalg.LinAlgError:
            return None
        diag = np.einsum("kii->ki", chol)
        if np.any(diag <= 0):
            return None
        return float(2.0 * np.sum(np.log(diag)))

    def min_margin(self, y: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.values(y)).min())

    def grad_hess(self, y: np.ndarray, s: float, with_s: bool):
        """Gradient and Hessian of the barrier sum -logdet(G_j - s I).

        Returns None when the iterate sits numerically on the PSD boundary
        and no tiny diagonal lift rescues the inversion.
        """
        nv = self.nv + (1 if with_s else 0)
        grad = np.zeros(nv)
        hess = np.zeros((nv, nv))
        g = self.values(y, s)
        ginv = None
        for lift in (0.0, 1e-14, 1e-12, 1e-9):
            try:
                ginv = np.linalg.inv(g + lift * self._eye if lift else g)
                break
            except np.linalg.LinAlgError:
                continue
        if ginv is None:
            return None
        ginv = 0.5 * (ginv + np.transpose(ginv, (0, 2, 1)))
        m = np.einsum("kab,kvbc->kvac", ginv, self.a)
        grad[: self.nv] = -np.einsum("kvaa->v", m)
        hess[: self.nv, : self.nv] = np.einsum("kvab,kwba->vw", m, m)
        if with_s:
            grad[-1] = np.einsum("kaa->", ginv)
            his = -np.einsum("kvab,kba->v", m, ginv)
            hess[: self.nv, -1] = his
            hess[-1, : self.nv] = his
            hess[-1, -1] = np.einsum("kab,kba->", ginv, ginv)
        return grad, hess


def _box_terms(y: np.ndarray, box):
    lo = box + y
    hi = box - y
    if np.any(lo <= 0) or np.any(hi <= 0):
        return None
    val = -float(np.sum(np.log(lo)) + np.sum(np.log(hi)))
    grad = 1.0 / hi - 1.0 / lo
    hess = 1.0 / hi ** 2 + 1.0 / lo ** 2
    return val, grad, hess


def _phi(barrier: _Barrier, y: np.ndarray, s: float, mu: float):
    if s >= _S_CAP:
        return None
    ld = barrier.logdet(y, s)
    if ld is None:
        return None
    out = -s / mu - ld - np.log(_S_CAP - s)
    if barrier.has_box:
        box = _box_terms(y, barrier.box)
        if box is None:
            return None
        out += box[0]
    return out


def _max_margin(barrier: _Barrier, y0: np.ndarray, tol: float,
                early_exit: bool, max_newton: int):
    """Maximize the worst normalized block margin.

    Terminates as soon as the sign of the margin is certified: at an
    approximate center of stage mu, the optimum lies within nu*mu above the
    current objective value, nu being the total barrier dimension.
    """
    nv = barrier.nv
    y = y0.copy()
    margin0 = barrier.min_margin(y)
    delta = max(1e-3, 0.1 * abs(margin0))
    s = margin0 - delta
    mu = delta
    nu = barrier.barrier_dim + 1 + (2 * nv if barrier.has_box else 0)
    iters = 0
    prev_lb = -np.inf
    stall = 0

    while iters < max_newton:
        decrement = np.inf
        for _ in range(25):
            if iters >= max_newton or decrement < 1e-8:
                break
            iters += 1
            gh = barrier.grad_hess(y, s, with_s=True)
            if gh is None:
                s = s - max(1e-9, 1e-6 * abs(s))
                break
            g_bar, h_bar = gh
            if barrier.has_box:
                box = _box_terms(y, barrier.box)
                if box is None:
                    return y, s, iters, "numerical_failure"
                g_bar[:nv] += box[1]
                h_bar[:nv, :nv] += np.diag(box[2])
            # objective -s/mu and the s-cap barrier
            g_bar[-1] += -1.0 / mu + 1.0 / (_S_CAP - s)
            h_bar[-1, -1] += 1.0 / (_S_CAP - s) ** 2
            h_bar[np.diag_indices_from(h_bar)] += 1e-14 * (1.0 + np.trace(h_bar))
            try:
                step = np.linalg.solve(h_bar, -g_bar)
            except np.linalg.LinAlgError:
                step, *_ = np.linalg.lstsq(h_bar, -g_bar, rcond=None)
            decrement = float(-g_bar @ step)
            if decrement < 1e-8:
                break
            alpha = 1.0
            moved = False
            phi0 = _phi(barrier, y, s, mu)
            if phi0 is None:
                return y, barrier.min_margin(y), iters, "numerical_failure"
            while alpha > 1e-14:
                y_new = y + alpha * step[:nv]
                s_new = s + alpha * step[-1]
                phi_new = _phi(barrier, y_new, s_new, mu)
                if phi_new is not None and phi_new <= phi0 - 0.25 * alpha * decrement + 1e-12:
                    y, s = y_new, s_new
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                break

        centered = decrement < 5e-3    # Newton decrement small enough for the gap bound
        lb = barrier.min_margin(y)     # attained margin, lower bound on optimum
        ub = s + 2 * nu * mu           # bound on the optimum, valid when centered
        if lb >= -tol and early_exit:
            return y, lb, iters, "feasible"
        if centered and ub < -tol:
            return y, lb, iters, "infeasible"
        if (centered and ub - lb < 0.25 * tol) or mu < 1e-15:
            return y, lb, iters, ("feasible" if lb >= -tol else "infeasible")
        if lb > prev_lb + _STALL_IMPROVEMENT:
            prev_lb, stall = lb, 0
        else:
            stall += 1
            if stall >= _STALL_WINDOW:
                return y, lb, iters, ("feasible" if lb >= -tol else "infeasible")
        mu *= 0.1
    return y, barrier.min_margin(y), iters, "numerical_failure"


def _min_norm(barrier: _Barrier, y0: np.ndarray, q_hess: np.ndarray,
              q_lin: np.ndarray, max_newton: int):
    """Minimize a convex quadratic from a strictly feasible start."""

    def q_val(yy):
        return 0.5 * float(yy @ q_hess @ yy) + float(q_lin @ yy)

    y = y0.copy()
    iters = 0
    weight = 1.0
    while weight < 1e9 and iters < max_newton:
        for _ in range(25):
            iters += 1
            gh = barrier.grad_hess(y, 0.0, with_s=False)
            if gh is None:
                break
            g_bar, h_bar = gh
            g = weight * (q_hess @ y + q_lin) + g_bar
            h = weight * q_hess + h_bar
            h[np.diag_indices_from(h)] += 1e-14 * (1.0 + np.trace(h))
            try:
                step = np.linalg.solve(h, -g)
            except np.linalg.LinAlgError:
                break
            decrement = float(-g @ step)
            alpha = 1.0
            moved = False
            ld0 = barrier.logdet(y, 0.0)
            while alpha > 1e-14:
                y_new = y + alpha * step
                ld1 = barrier.logdet(y_new, 0.0)
                if ld1 is not None:
                    f0 = weight * q_val(y) - ld0
                    f1 = weight * q_val(y_new) - ld1
                    if f1 <= f0 - 0.25 * alpha * decrement + 1e-12:
                        y = y_new
                        moved = True
                        break
                alpha *= 0.5
            if not moved or decrement < 1e-12:
                break
        weight *= 8.0
    return y, iters


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL, box: float = 1e9,
          early_exit: bool = True, max_newton: int = 4000,
          y0: np.ndarray | None = None) -> SdpSolution:
    """Feasibility (optionally min-norm) solve with eigenvalue certification."""
    variables = list(problem.variables)
    blocks = list(problem.blocks)
    if problem.normalize_trace:
        blocks = eliminate_trace(blocks, problem.trace_value)
        variables = [v for v in variables if v != "p22"]
        box = np.inf  # the positivity block already bounds the reduced set

    # condition the Newton system by working in units set by the warm start
    start_raw = np.zeros(len(variables)) if y0 is None else np.asarray(y0, dtype=float)

    def scale_from(vector):
        top = np.abs(vector).max()
        if top <= 0:
            return np.ones(len(variables))
        return np.maximum(np.abs(vector), max(1e-3 * top, 1e-30))

    var_scale = scale_from(start_raw)
    mode_early = early_exit and problem.objective == "feasibility"
    iters = 0
    for attempt in range(2):
        barrier = _Barrier(blocks, variables, box, var_scale)
        start = start_raw / var_scale
        y, margin, it, status = _max_margin(barrier, start, tol, mode_early, max_newton)
        iters += it
        if status == "feasible" or problem.normalize_trace or attempt == 1:
            break
        # a cold run that drifted without certifying may just be badly scaled;
        # retry once in the units the iterate wandered to
        drifted = y * var_scale
        rescale = scale_from(drifted)
        if np.allclose(rescale, var_scale, rtol=0.5):
            break
        start_raw = drifted
        var_scale = rescale

    if problem.objective == "min_norm_p" and status == "feasible" \
            and barrier.min_margin(y) > 0:
        if problem.normalize_trace:
            # ||P||_F^2 with p22 = trace - p11; remaining reduced vars are free
            q_hess = np.zeros((len(variables), len(variables)))
            q_lin = np.zeros(len(variables))
            i11 = variables.index("p11")
            i12 = variables.index("p12")
            q_hess[i11, i11] = 4.0
            q_hess[i12, i12] = 4.0
            q_lin[i11] = -2.0 * problem.trace_value
        else:
            q_hess = np.diag([{"p11": 2.0, "p12": 4.0, "p22": 2.0}.get(v, 0.0)
                              for v in variables])
            q_lin = np.zeros(len(variables))
        s_mat = np.diag(var_scale)
        y, extra = _min_norm(barrier, y, s_mat @ q_hess @ s_mat, var_scale * q_lin,
                             max_newton)
        iters += extra

    assignment = dict(zip(variables, y * var_scale))
    if problem.normalize_trace:
        assignment["p22"] = problem.trace_value - assignment["p11"]
    res = residuals(problem.blocks, assignment)
    if status != "numerical_failure":
        if res >= -tol:
            status = "feasible" if problem.objective == "feasibility" else "optimal"
        else:
            status = "infeasible"
    p_matrix = None
    if set(P_VARS) <= set(assignment):
        p_matrix = p_from_vars(*(assignment[v] for v in P_VARS))
    return SdpSolution(status=status, p_matrix=p_matrix,
                       t_value=assignment.get("t"), max_residual=res,
                       margin=margin, newton_iterations=iters,
                       assignment=assignment)


def min_effort(problem: SdpProblem, t_hi: float, tol: float = DEFAULT_T_TOL,
               residual_tol: float = DEFAULT_TOL, box: float = 1e9,
               warm_start: np.ndarray | None = None) -> SdpSolution:
    """Smallest feasible squared effort ceiling by bisection over [0, t_hi].

    The problem must declare the variable ``t``; each probe freezes one value
    and solves the resulting pure feasibility problem.  ``warm_start`` seeds
    the first probes with P entries of the right magnitude (the certificate
    entries scale like 1/length^2, far from the zero default).
    """
    if "t" not in problem.variables:
        raise ValueError("min_effort needs a problem with the variable 't'")
    if not t_hi > 0:
        raise ValueError(f"t_hi must be positive, got {t_hi}")
    p_variables = tuple(v for v in problem.variables if v != "t")

    def probe(t_value: float, warm=None) -> SdpSolution:
        sub = SdpProblem(p_variables, tuple(bind_t(problem.blocks, t_value)))
        return solve(sub, tol=residual_tol, box=box, y0=warm)

    total_iters = 0
    at_zero = probe(0.0, warm=warm_start)
    total_iters += at_zero.newton_iterations
    if at_zero.ok:
        at_zero.t_value = 0.0
        at_zero.status = "optimal"
        at_zero.newton_iterations = total_iters
        return at_zero

    best = probe(t_hi, warm=warm_start)
    total_iters += best.newton_iterations
    if not best.ok:
        best.newton_iterations = total_iters
        return best  # infeasible even at the ceiling: candidate rejected

    best.t_value = t_hi
    lo, hi = 0.0, t_hi
    warm = np.array([best.assignment[v] for v in p_variables])
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        probe_sol = probe(mid, warm=warm)
        total_iters += probe_sol.newton_iterations
        if probe_sol.status == "numerical_failure":
            best.status = "numerical_failure"
            best.newton_iterations = total_iters
            return best
        if probe_sol.ok:
            hi = mid
            probe_sol.t_value = mid
            best = probe_sol
            warm = np.array([probe_sol.assignment[v] for v in p_variables])
        else:
            lo = mid
    best.status = "optimal"
    best.newton_iterations = total_iters
    return best
