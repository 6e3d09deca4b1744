"""Pseudo-arclength continuation of solution branches.

Points live in (param, v) space with the inner product
``<(p1, v1), (p2, v2)> = p1 p2 + sum(w * v1 * v2)`` (``w`` the trapezoid
weights), so step geometry barely changes under grid refinement.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import Frame
from .spectra import SpectrumReport
from .system import NewtonFailure, Problem, SolutionPoint, clip_tol, damped_newton, newton_solve

log = logging.getLogger(__name__)

TERMINATION_TAGS = (
    "returns_to_gamma0_at_zero", "returns_to_gamma0_at_mu_eps", "meets_gamma00",
    "hits_norm_cap_rho", "hits_param_cap_Lambda", "negative_param", "step_failure",
)


@dataclass(frozen=True)
class StepControl:
    ds0: float = 1e-2
    ds_min: float = 1e-6
    ds_max: float = 5e-2
    newton_tol: float = 1e-10
    corrector_max_iter: int = 12
    easy_iter: int = 3
    grow_after: int = 4
    max_steps: int = 20000
    trivial_tol: float = 1e-8
    const_tol: float = 1e-6
    param_tol: float = 1e-6
    sol_sep_tol: float = 1e-6

    @property
    def max_step(self) -> float:
        """Largest accepted jump between consecutive points in the (param, |v|_inf) plane."""
        return 4.0 * self.ds_max


@dataclass(frozen=True)
class TerminationKind:
    tag: str
    location: tuple[float, float]
    detail: str = ""


@dataclass
class Branch:
    points: list[SolutionPoint]
    eps: float
    origin: str
    frame: Frame
    bif_param: float = float("nan")
    termination: TerminationKind | None = None
    folds: list[int] = field(default_factory=list)
    source: "Branch | None" = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def params(self) -> np.ndarray:
        return np.array([pt.param for pt in self.points])

    @property
    def norms(self) -> np.ndarray:
        return np.array([pt.norm_inf for pt in self.points])

    def polyline(self) -> np.ndarray:
        """(param, |v|_inf) vertices, shape (k, 2)."""
        return np.column_stack([self.params, self.norms]) if self.points else np.zeros((0, 2))


# --- geometry of the augmented system ------------------------------------------

def _inner(prob: Problem, a: tuple[float, np.ndarray], b: tuple[float, np.ndarray]) -> float:
    return a[0] * b[0] + float(np.sum(prob.grid.quad_weights * a[1] * b[1]))


def _normalized(prob: Problem, tp: float, tv: np.ndarray) -> tuple[float, np.ndarray]:
    nrm = np.sqrt(_inner(prob, (tp, tv), (tp, tv)))
    return tp / nrm, tv / nrm


def _bordered_solve(prob: Problem, param: float, v: np.ndarray, tangent, rhs: np.ndarray) -> np.ndarray:
    J = prob.jacobian(param, v).tocsr()
    col = -prob.rhs_dparam(param, v)[:, None]
    tp, tv = tangent
    row = (prob.grid.quad_weights * tv)[None, :]
    A = sp.bmat([[J, sp.csr_matrix(col)], [sp.csr_matrix(row), sp.csr_matrix([[tp]])]], format="csc")
    return splu(A).solve(rhs)


def corrector(prob: Problem, base: SolutionPoint, tangent, ds: float, guess, ctl: StepControl):
    """Newton on {R(p, v) = 0, <(p, v) - base, tangent> = ds}; returns (point, iterations)."""
    n = prob.grid.n
    tp, tv = tangent
    w = prob.grid.quad_weights

    def F(x):
        p, v = x[-1], x[:-1]
        con = (p - base.param) * tp + float(np.sum(w * (v - base.v) * tv)) - ds
        return np.append(prob.residual(p, v), con)

    def step(x, r):
        return _bordered_solve(prob, x[-1], x[:-1], tangent, -r)

    def project(x):
        x = x.copy()
        x[:-1] = prob.project(x[:-1])
        return x

    x0 = np.append(guess[1], guess[0])
    tol = lambda x: ctl.newton_tol + prob.roundoff_floor(x[:-1])
    x, _, it = damped_newton(F, step, x0, tol, ctl.corrector_max_iter, project=project, armijo=False)
    return prob.point(x[-1], x[:n]), it


# --- seeds ---------------------------------------------------------------------

def tangent_at_bifurcation(which: str, spectrum: SpectrumReport, s0: float = 1e-3,
                           frame: Frame = Frame.Q) -> SolutionPoint:
    """Uncorrected predictor (param, s0 * eigenfunction) at a principal eigenvalue."""
    if which == "zero":
        pair = spectrum.zero_pair
    elif which == "mu_eps":
        pair = spectrum.positive_pair
    else:
        raise ValueError(f"unknown bifurcation point {which!r}")
    if pair is None:
        raise ValueError(f"spectrum lacks the {which} eigenvalue")
    if not s0 > 0:
        raise ValueError("s0 must be positive")
    v = s0 * pair.eigfun
    return SolutionPoint(float(pair.value), v, float("nan"), float(np.min(v)), frame)


def start_branch(prob: Problem, which: str, spectrum: SpectrumReport, s0: float = 1e-3,
                 direction: float = 1.0, ctl: StepControl | None = None) -> Branch:
    """Bifurcation point plus one corrected pseudo-arclength step along +/- eigenfunction."""
    ctl = ctl or StepControl()
    pred = tangent_at_bifurcation(which, spectrum, s0, prob.frame)
    param, v = pred.param, direction * pred.v
    bif = prob.point(param, np.zeros(prob.grid.n))
    tangent = _normalized(prob, 0.0, v)
    ds = np.sqrt(_inner(prob, (0.0, v), (0.0, v)))
    origin = "bif_at_mu_eps" if which == "mu_eps" else "bif_at_zero"
    branch = Branch([bif], spectrum.eps, origin, prob.frame, bif_param=param)
    try:
        pt, _ = corrector(prob, bif, tangent, ds, (param, v), ctl)
    except NewtonFailure as exc:
        branch.termination = TerminationKind("step_failure", (param, 0.0), f"seed corrector: {exc.reason}")
        return branch
    branch.points.append(pt)
    return branch


def seed_branch(prob: Problem, points: list[SolutionPoint], eps: float, origin: str = "user_seed") -> Branch:
    return Branch(list(points), eps, origin, prob.frame)


# --- termination ------------------------------------------------------------------

def _near_mu_eps(param: float, mu_eps: float) -> bool:
    return np.isfinite(mu_eps) and abs(param - mu_eps) <= max(1e-6, 0.05 * abs(mu_eps))


def classify_termination(b: Branch, rho: float, Lambda: float, cstar_eps: float | None = None,
                         ctl: StepControl | None = None) -> TerminationKind:
    """Classify the last point of a branch (predicates checked in a fixed order)."""
    ctl = ctl or StepControl()
    last = b.points[-1]
    p, nrm = last.param, last.norm_inf
    loc = (p, nrm)
    mu_eps = b.bif_param
    zero_window = max(ctl.param_tol, 0.05 * abs(mu_eps)) if np.isfinite(mu_eps) else ctl.param_tol
    if nrm <= ctl.trivial_tol:
        if abs(p) <= zero_window and not _near_mu_eps(p, mu_eps):
            return TerminationKind("returns_to_gamma0_at_zero", loc)
        if _near_mu_eps(p, mu_eps):
            return TerminationKind("returns_to_gamma0_at_mu_eps", loc)
    if p <= ctl.param_tol and np.max(np.abs(last.v - last.v.mean())) <= ctl.const_tol:
        detail = "" if cstar_eps is None else f"gap_to_cstar={abs(last.v.mean() - cstar_eps):.3e}"
        return TerminationKind("meets_gamma00", loc, detail)
    if nrm >= rho:
        return TerminationKind("hits_norm_cap_rho", loc)
    if p >= Lambda:
        return TerminationKind("hits_param_cap_Lambda", loc)
    if p < -ctl.param_tol and b.frame.is_q:
        return TerminationKind("negative_param", loc)
    return TerminationKind("step_failure", loc)


# --- tracing -------------------------------------------------------------------------

def _admissible(prob: Problem, pt: SolutionPoint, ctl: StepControl) -> str:
    if pt.min_v < -clip_tol(pt.v) or pt.norm_inf <= ctl.trivial_tol:
        # crossing into sign-changing states, or jumping onto the trivial line
        return "state"
    if prob.frame.is_q and pt.param < 0:
        return "param"
    return ""


def _land(prob: Problem, last: SolutionPoint, kind: str) -> SolutionPoint:
    """Project the last admissible point onto the trivial line it was about to cross."""
    if kind == "state":
        return prob.point(last.param, np.zeros(prob.grid.n))
    return prob.point(0.0, np.full(prob.grid.n, last.v.mean()))


def extend_branch(b: Branch, prob: Problem, ctl: StepControl | None = None, rho: float = np.inf,
                  Lambda: float = np.inf, cstar_eps: float | None = None) -> Branch:
    """Continue a branch by secant predictor / pseudo-arclength corrector until a stop event."""
    ctl = ctl or StepControl()
    b = replace(b, points=list(b.points), folds=list(b.folds))
    if b.termination is not None and b.termination.tag == "step_failure" and len(b.points) < 2:
        return b
    if len(b.points) < 2:
        raise ValueError("extend_branch needs at least two points for the secant predictor")
    # a seed that already left the non-negative cone has no admissible continuation
    if _admissible(prob, b.points[-1], ctl):
        last = b.points[-1]
        b.termination = TerminationKind("negative_param", (last.param, last.norm_inf), "seed not admissible")
        return b

    ds = ctl.ds0
    easy = 0
    landing = False
    for _ in range(ctl.max_steps):
        prev, cur = b.points[-2], b.points[-1]
        tangent = _normalized(prob, cur.param - prev.param, cur.v - prev.v)
        event = ""
        while True:
            guess = (cur.param + ds * tangent[0], cur.v + ds * tangent[1])
            try:
                pt, it = corrector(prob, cur, tangent, ds, guess, ctl)
                dist = np.hypot(pt.param - cur.param, pt.norm_inf - cur.norm_inf)
                new_t = _normalized(prob, pt.param - cur.param, pt.v - cur.v)
                turn = _inner(prob, new_t, tangent)
                if dist > ctl.max_step or turn < 0.5:
                    raise NewtonFailure("jump", pt.v)
                event = _admissible(prob, pt, ctl)
                if not event:
                    break
                landing = True
            except NewtonFailure:
                it = None
            ds *= 0.5
            easy = 0
            if ds < ctl.ds_min:
                if event:
                    b.points.append(_land(prob, cur, event))
                    b.termination = classify_termination(b, rho, Lambda, cstar_eps, ctl)
                    if b.termination.tag == "step_failure":
                        b.points.pop()
                else:
                    b.termination = TerminationKind("step_failure", (cur.param, cur.norm_inf), "ds below ds_min")
                return b
        if pt.param > Lambda:
            b.termination = TerminationKind("hits_param_cap_Lambda", (pt.param, pt.norm_inf))
            return b
        if len(b.points) >= 2 and (pt.param - cur.param) * (cur.param - prev.param) < 0:
            b.folds.append(len(b.points) - 1)
            log.debug("fold near param=%.6g", cur.param)
        b.points.append(pt)
        if pt.norm_inf >= rho:
            b.termination = TerminationKind("hits_norm_cap_rho", (pt.param, pt.norm_inf))
            return b
        easy = easy + 1 if it <= ctl.easy_iter else 0
        if easy >= ctl.grow_after and not landing:
            ds, easy = min(2.0 * ds, ctl.ds_max), 0
    last = b.points[-1]
    b.termination = TerminationKind("step_failure", (last.param, last.norm_inf), "max_steps reached")
    return b


def trace_from_bifurcation(prob: Problem, spectrum: SpectrumReport, which: str = "mu_eps", *,
                           ctl: StepControl | None = None, rho: float = np.inf, Lambda: float = np.inf,
                           cstar_eps: float | None = None, s0: float = 1e-3, direction: float = 1.0) -> Branch:
    ctl = ctl or StepControl()
    b = start_branch(prob, which, spectrum, s0, direction, ctl)
    if b.termination is not None:
        return b
    return extend_branch(b, prob, ctl, rho=rho, Lambda=Lambda, cstar_eps=cstar_eps)


# --- crossings ------------------------------------------------------------------------

def solutions_at_param(b: Branch, param_value: float, prob: Problem | None = None,
                       ctl: StepControl | None = None) -> list[SolutionPoint]:
    """All distinct points of the branch at param = param_value.

    Crossings of the polyline are interpolated and, when ``prob`` is given,
    refined by fixed-parameter Newton.  A crossing through a vertex (e.g. a
    fold touching the level) is found once.
    """
    ctl = ctl or StepControl()
    pts = b.points
    found: list[SolutionPoint] = []
    for i in range(len(pts) - 1):
        p0, p1 = pts[i].param, pts[i + 1].param
        if not min(p0, p1) <= param_value <= max(p0, p1):
            continue
        t = 0.0 if p1 == p0 else (param_value - p0) / (p1 - p0)
        if t <= 0.0:
            cand = pts[i]
        elif t >= 1.0:
            cand = pts[i + 1]
        else:
            v = (1 - t) * pts[i].v + t * pts[i + 1].v
            cand = None
            if prob is not None:
                try:
                    ref = newton_solve(prob, v, param_value, tol=ctl.newton_tol)
                    if np.max(np.abs(ref.v - v)) <= 0.1 * (1.0 + np.max(np.abs(v))):
                        cand = ref
                except NewtonFailure:
                    pass
            if cand is None:
                cand = SolutionPoint(float(param_value), v, float("nan"), float(np.min(v)), b.frame)
        if all(np.max(np.abs(cand.v - f.v)) > ctl.sol_sep_tol for f in found):
            found.append(cand)
    return found
