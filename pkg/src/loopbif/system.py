"""Residuals, Jacobians and Newton's method for the four problem variants,
together with the closed-form constant-limit and divergence identities.

Right-hand sides by frame (``T`` the concave term, ``S`` the convex term)::

    Q              mu * (b T_eps(v) + a S(v))
    P              lam * b T_eps(v) + a S(v)
    P_eps_variant  lam * (b - eps) T_eps(v) + a S(v)
    Q_alt_variant  mu * ((b - eps) T_eps(v) + a S(v))

``T_eps(s) = (s + eps)^(q-2) s`` for ``s >= 0`` and its tangent line
``eps^(q-2) s`` below zero; ``T_0(s) = |s|^(q-2) s``; ``S(s) = |s|^(p-2) s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError

from .mesh import Frame, Grid, OperatorMatrix, ProblemParams, WeightPair, apply_neumann_laplacian, neumann_laplacian, trapezoid_integral

DERIV_FLOOR = 1e-10
HOMOTOPY_EPS = (1e-6, 1e-8)


class JacobianSingular(ArithmeticError):
    pass


class NewtonFailure(RuntimeError):
    def __init__(self, reason: str, last_iterate: np.ndarray, residual_norm: float = np.nan):
        super().__init__(f"Newton failed: {reason} (residual {residual_norm:.3e})")
        self.reason = reason
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class SolutionPoint:
    param: float
    v: np.ndarray = field(repr=False)
    residual_norm: float
    min_v: float
    frame: Frame

    @property
    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.v)))


def clip_tol(v: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(np.max(np.abs(v))))


# --- pointwise nonlinearities ------------------------------------------------

def concave_term(s: np.ndarray, eps: float, q: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if eps == 0:
        return np.sign(s) * np.abs(s) ** (q - 1.0)
    pos = np.maximum(s, 0.0)
    return np.where(s >= 0, (pos + eps) ** (q - 2.0) * pos, eps ** (q - 2.0) * s)


def concave_term_deriv(s: np.ndarray, eps: float, q: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if eps == 0:
        with np.errstate(divide="ignore"):
            return (q - 1.0) * np.abs(s) ** (q - 2.0)
    pos = np.maximum(s, 0.0)
    inner = (pos + eps) ** (q - 2.0) + (q - 2.0) * (pos + eps) ** (q - 3.0) * pos
    return np.where(s >= 0, inner, eps ** (q - 2.0))


def convex_term(s: np.ndarray, p: float) -> np.ndarray:
    return np.abs(s) ** (p - 2.0) * s


def convex_term_deriv(s: np.ndarray, p: float) -> np.ndarray:
    return (p - 1.0) * np.abs(s) ** (p - 2.0)


# --- the discrete problem ------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    grid: Grid
    weights: WeightPair
    params: ProblemParams

    @cached_property
    def laplacian(self) -> OperatorMatrix:
        return neumann_laplacian(self.grid)

    @property
    def frame(self) -> Frame:
        return self.params.frame

    def with_params(self, **kw) -> "Problem":
        return Problem(self.grid, self.weights, self.params.with_(**kw))

    def concave_weight(self) -> np.ndarray:
        b = self.weights.b_samples
        if self.frame in (Frame.P_EPS, Frame.Q_ALT):
            return b - self.params.eps
        return b

    def _terms(self, v):
        pr = self.params
        return concave_term(v, pr.eps, pr.q), convex_term(v, pr.p)

    def rhs(self, param: float, v: np.ndarray) -> np.ndarray:
        T, S = self._terms(v)
        bw, a = self.concave_weight(), self.weights.a_samples
        if self.frame.is_q:
            return param * (bw * T + a * S)
        return param * bw * T + a * S

    def rhs_dparam(self, param: float, v: np.ndarray) -> np.ndarray:
        T, S = self._terms(v)
        bw = self.concave_weight()
        if self.frame.is_q:
            return bw * T + self.weights.a_samples * S
        return bw * T

    def rhs_dv(self, param: float, v: np.ndarray) -> np.ndarray:
        pr = self.params
        bw, a = self.concave_weight(), self.weights.a_samples
        if pr.eps == 0 and param != 0:
            active = (bw != 0) & (np.abs(v) < DERIV_FLOOR)
            if np.any(active):
                raise JacobianSingular("Jacobian singular at origin")
        dT = concave_term_deriv(v, pr.eps, pr.q)
        dS = convex_term_deriv(v, pr.p)
        if self.frame.is_q:
            return param * (bw * dT + a * dS)
        return param * bw * dT + a * dS

    def residual(self, param: float, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return apply_neumann_laplacian(self.grid, v) - self.rhs(param, v)

    def jacobian(self, param: float, v: np.ndarray) -> OperatorMatrix:
        return OperatorMatrix(
            self.laplacian.lower, self.laplacian.diag - self.rhs_dv(param, v),
            self.laplacian.upper, "jacobian",
        )

    def roundoff_floor(self, v: np.ndarray) -> float:
        """Residual level reachable in double precision: L applied to half-ulp noise in v."""
        return 8.0 * np.finfo(float).eps * float(np.max(np.abs(v))) / self.grid.h ** 2

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.maximum(v, -0.5 * self.params.eps)

    def point(self, param: float, v: np.ndarray) -> SolutionPoint:
        v = np.array(v, dtype=float)
        v.setflags(write=False)
        r = self.residual(param, v)
        return SolutionPoint(float(param), v, float(np.max(np.abs(r))), float(np.min(v)), self.frame)


def residual(prob: Problem, pt: SolutionPoint) -> np.ndarray:
    return prob.residual(pt.param, pt.v)


def jacobian(prob: Problem, pt: SolutionPoint) -> OperatorMatrix:
    return prob.jacobian(pt.param, pt.v)


# --- Newton ----------------------------------------------------------------------

def damped_newton(F, step, x0, tol_fn, max_iter: int, project=None, armijo: bool = True):
    """Newton iteration ``x <- x + t dx`` with ``step(x, r)`` solving ``J dx = -r``.

    With ``armijo`` the step length t is halved (up to 30 times) until
    ``|r|^2`` decreases sufficiently.  Returns ``(x, r, iterations)``.
    """
    project = project or (lambda x: x)
    x = project(np.array(x0, dtype=float))
    r = F(x)
    for it in range(max_iter + 1):
        rn = float(np.max(np.abs(r)))
        if not np.isfinite(rn):
            raise NewtonFailure("nan", x, rn)
        if rn <= tol_fn(x):
            return x, r, it
        if it == max_iter:
            break
        try:
            dx = step(x, r)
        except (JacobianSingular, LinAlgError, RuntimeError) as exc:
            raise NewtonFailure("singular", x, rn) from exc
        if not np.all(np.isfinite(dx)):
            raise NewtonFailure("singular", x, rn)
        phi0 = float(r @ r)
        t = 1.0
        for _ in range(31 if armijo else 1):
            x_new = project(x + t * dx)
            r_new = F(x_new)
            phi = float(r_new @ r_new)
            if not armijo or (np.isfinite(phi) and phi <= (1.0 - 1e-4 * t) * phi0):
                break
            t *= 0.5
        else:
            raise NewtonFailure("max_iter", x, rn)
        x, r = x_new, r_new
    raise NewtonFailure("max_iter", x, float(np.max(np.abs(r))))


def _fixed_param_newton(prob: Problem, v0, param: float, tol: float, max_iter: int) -> SolutionPoint:
    v, _, _ = damped_newton(
        lambda v: prob.residual(param, v),
        lambda v, r: prob.jacobian(param, v).solve(-r),
        v0, lambda v: tol + prob.roundoff_floor(v), max_iter, project=prob.project,
    )
    return prob.point(param, v)


def newton_solve(prob: Problem, initial, param: float, tol: float = 1e-10, max_iter: int = 50) -> SolutionPoint:
    """Damped Newton at fixed parameter.

    For eps = 0 a singular Jacobian triggers the regularization homotopy
    eps = 1e-6 -> 1e-8 -> 0; if the final eps = 0 polish is still singular
    the eps = 1e-8 state is accepted provided its eps = 0 residual meets tol.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    try:
        return _fixed_param_newton(prob, initial, param, tol, max_iter)
    except NewtonFailure as exc:
        if prob.params.eps != 0 or exc.reason != "singular":
            raise
    v = np.asarray(initial, dtype=float)
    for eps in HOMOTOPY_EPS:
        v = _fixed_param_newton(prob.with_params(eps=eps), v, param, tol, max_iter).v
    try:
        return _fixed_param_newton(prob, v, param, tol, max_iter)
    except NewtonFailure:
        pt = prob.point(param, v)
        if pt.residual_norm <= tol + prob.roundoff_floor(v):
            return pt
        raise


# --- closed-form identities --------------------------------------------------

def cstar(eps: float, w: WeightPair, params: ProblemParams) -> float:
    """Unique positive root of c^(p-2) (c + eps)^(2-q) = -int b / int a (by bisection)."""
    if not w.int_a > 0:
        raise ValueError("constant limit undefined: int a must be positive")
    if not w.int_b < 0:
        raise ValueError("constant limit undefined: int b must be negative")
    ratio = -w.int_b / w.int_a
    p, q = params.p, params.q
    F = lambda c: c ** (p - 2.0) * (c + eps) ** (2.0 - q) - ratio
    lo, hi = 0.0, 1.0
    while F(hi) < 0:
        lo, hi = hi, 2.0 * hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(F(lo)) <= abs(F(hi)) else hi


def cstar_residual(c: float, eps: float, w: WeightPair, params: ProblemParams) -> float:
    return c ** (params.p - 2.0) * (c + eps) ** (2.0 - params.q) + w.int_b / w.int_a


def divergence_residual(prob: Problem, pt: SolutionPoint) -> float:
    """|integral of the right-hand side| / |param|; vanishes for exact Neumann solutions."""
    if pt.param == 0:
        raise ValueError("identity undefined at zero parameter")
    if prob.frame.is_q:
        return abs(trapezoid_integral(prob.grid, prob.rhs_dparam(pt.param, pt.v)))
    return abs(trapezoid_integral(prob.grid, prob.rhs(pt.param, pt.v))) / abs(pt.param)


# --- probes ------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeOutcome:
    status: str  # trivial | nontrivial_nonneg | sign_changing | no_convergence
    norm_inf: float
    min_v: float
    reason: str = ""


@dataclass(frozen=True)
class ProbeReport:
    param: float
    outcomes: list[ProbeOutcome]

    @property
    def nontrivial_found(self) -> int:
        return sum(o.status == "nontrivial_nonneg" for o in self.outcomes)


def random_positive_starts(g: Grid, n_starts: int, seed: int = 42) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    xi = (g.nodes - g.x_lo) / g.length
    starts = []
    for _ in range(n_starts):
        scale = 10.0 ** rng.uniform(-2, 1)
        coef = rng.normal(size=4) / (1.0 + np.arange(4))
        shape = sum(c * np.cos(np.pi * k * xi) for k, c in enumerate(coef))
        shape = shape - shape.min()
        shape = 0.2 + shape / max(shape.max(), 1e-12)
        starts.append(scale * shape)
    return starts


def _follow_to_zero(prob: Problem, pt: SolutionPoint, param: float, trivial_tol: float, max_iter: int) -> float:
    """Keep taking plain Newton steps while the norm shrinks.

    u = 0 is a degenerate root, so the residual reaches the round-off floor
    while |u| is still far above ``trivial_tol``; the Newton map itself keeps
    contracting towards zero, which is what separates such iterates from a
    genuine nontrivial solution (where the steps stall immediately).
    """
    v, nrm = np.array(pt.v), pt.norm_inf
    for _ in range(max_iter):
        if nrm <= trivial_tol:
            break
        try:
            v_new = prob.project(v + prob.jacobian(param, v).solve(-prob.residual(param, v)))
        except (JacobianSingular, LinAlgError):
            break
        n_new = float(np.max(np.abs(v_new)))
        if not n_new < 0.99 * nrm:
            break
        v, nrm = v_new, n_new
    return nrm


def positivity_probe(prob: Problem, param: float, n_starts: int, seed: int = 42,
                     trivial_tol: float = 1e-10, max_iter: int = 200) -> ProbeReport:
    """Newton from random positive states at fixed parameter; classify every outcome.

    The tolerance is tight enough that iterates drifting to zero (which they
    do only linearly, since u = 0 is a degenerate root) are followed until
    their norm drops below ``trivial_tol``.
    """
    outcomes = []
    for v0 in random_positive_starts(prob.grid, n_starts, seed):
        try:
            pt = newton_solve(prob, v0, param, tol=1e-3 * trivial_tol ** 2, max_iter=max_iter)
        except NewtonFailure as exc:
            v = exc.last_iterate
            nrm = float(np.max(np.abs(v)))
            status = "trivial" if nrm <= trivial_tol else "no_convergence"
            outcomes.append(ProbeOutcome(status, nrm, float(np.min(v)), exc.reason))
            continue
        nrm = _follow_to_zero(prob, pt, param, trivial_tol, max_iter)
        if nrm <= trivial_tol:
            status = "trivial"
        elif pt.min_v < -clip_tol(pt.v):
            status = "sign_changing"
        else:
            status = "nontrivial_nonneg"
        outcomes.append(ProbeOutcome(status, nrm, pt.min_v))
    return ProbeReport(float(param), outcomes)


def nonexistence_probe_lambda0(prob: Problem, n_starts: int = 20, seed: int = 42) -> ProbeReport:
    """Search for nontrivial non-negative solutions of the unregularized problem at lambda = 0."""
    return positivity_probe(prob.with_params(frame=Frame.P, eps=0.0), 0.0, n_starts, seed)
