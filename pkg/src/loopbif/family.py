"""Families of regularized branches as eps -> 0, rescaling to the P frame,
loop classification and the two-sided split of the prehypo component."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .continuation import Branch, StepControl, TerminationKind, solutions_at_param, trace_from_bifurcation
from .mesh import ConfigError, Frame, check_hypotheses
from .spectra import parameter_cap, principal_eigenpair_neumann
from .system import NewtonFailure, Problem, SolutionPoint, cstar, newton_solve

log = logging.getLogger(__name__)


# --- polyline distances -----------------------------------------------------------

def _point_to_polyline(pts: np.ndarray, line: np.ndarray) -> np.ndarray:
    """Distance from each row of ``pts`` to the polyline through the rows of ``line``."""
    if len(line) == 1:
        return np.hypot(*(pts - line[0]).T)
    a, b = line[:-1], line[1:]
    ab = b - a
    len2 = np.einsum("ij,ij->i", ab, ab)
    out = np.empty(len(pts))
    for k in range(0, len(pts), 256):
        p = pts[k:k + 256, None, :]
        t = np.einsum("kij,ij->ki", p - a, ab) / np.where(len2 > 0, len2, 1.0)
        t = np.clip(t, 0.0, 1.0)
        d = p - (a + t[..., None] * ab)
        out[k:k + 256] = np.sqrt(np.min(np.einsum("kij,kij->ki", d, d), axis=1))
    return out


def hausdorff(line_a: np.ndarray, line_b: np.ndarray) -> float:
    """Hausdorff distance between two polylines, measured from the vertices of each to the other."""
    line_a, line_b = np.atleast_2d(line_a), np.atleast_2d(line_b)
    if line_a.size == 0 or line_b.size == 0:
        return float("inf")
    return float(max(_point_to_polyline(line_a, line_b).max(), _point_to_polyline(line_b, line_a).max()))


# --- family ---------------------------------------------------------------------------

@dataclass
class FamilyResult:
    eps_sequence: list[float]
    branches: list[Branch]
    hausdorff_gaps: list[float]
    mu_eps_values: list[float]
    cstar_values: list[float | None]
    nu_unscaled: float = float("nan")
    Lambda: float = float("nan")
    rho: float = float("nan")


def _caps(cfg: RunConfig, g, w, params) -> tuple[float, float]:
    c = cfg.continuation
    Lam = c.Lambda if c.Lambda is not None else parameter_cap(g, w, params)
    if c.rho is not None:
        rho = c.rho
    else:
        rho = 4.0 * cstar(0.0, w, params)
    return Lam, rho


def trace_one(cfg: RunConfig, eps: float, frame: Frame | str | None = None) -> tuple[Branch, float]:
    """Trace the branch bifurcating from (mu_eps, 0); returns it with mu_eps."""
    prob = cfg.problem(eps, frame)
    g, w = prob.grid, prob.weights
    Lam, rho = _caps(cfg, g, w, prob.params)
    spec = principal_eigenpair_neumann(g, prob.concave_weight(), eps, prob.params.q)
    try:
        cs = cstar(eps, w, prob.params)
    except ValueError:
        cs = None
    b = trace_from_bifurcation(prob, spec, "mu_eps", ctl=cfg.continuation.step_control(),
                               rho=rho, Lambda=Lam, cstar_eps=cs, s0=cfg.continuation.s0)
    return b, spec.mu_eps


def trace_family(cfg: RunConfig, eps_sequence=None) -> FamilyResult:
    seq = list(cfg.continuation.eps_sequence if eps_sequence is None else eps_sequence)
    if not seq:
        raise ValueError("eps_sequence must not be empty")
    if any(not 0 < e <= 1 for e in seq) or any(x <= y for x, y in zip(seq, seq[1:])):
        raise ValueError("eps_sequence must be strictly decreasing within (0, 1]")
    prob = cfg.problem(seq[0], Frame.Q)
    g, w = prob.grid, prob.weights
    Lam, rho = _caps(cfg, g, w, prob.params)
    ctl = cfg.continuation.step_control()
    branches, mus, cs_vals = [], [], []
    nu = float("nan")
    for eps in seq:
        p_eps = prob.with_params(eps=eps)
        spec = principal_eigenpair_neumann(g, w.b_samples, eps, p_eps.params.q)
        nu = spec.nu_unscaled
        try:
            cs = cstar(eps, w, p_eps.params)
        except ValueError:
            cs = None
        b = trace_from_bifurcation(p_eps, spec, "mu_eps", ctl=ctl, rho=rho, Lambda=Lam,
                                   cstar_eps=cs, s0=cfg.continuation.s0)
        log.info("eps=%g: %d points, %s", eps, len(b), b.termination.tag if b.termination else "-")
        branches.append(b)
        mus.append(spec.mu_eps)
        cs_vals.append(cs)
    gaps = [hausdorff(b0.polyline(), b1.polyline()) for b0, b1 in zip(branches, branches[1:])]
    return FamilyResult(seq, branches, gaps, mus, cs_vals, nu, Lam, rho)


@dataclass(frozen=True)
class LimsupEstimate:
    polyline: np.ndarray
    distances: np.ndarray
    percentile95: float
    accepted: bool
    divergent: bool


def limsup_estimate(fam: FamilyResult, limsup_tol: float = 0.1) -> LimsupEstimate:
    """Finest-eps polyline with its distances to the previous member of the family."""
    if len(fam.branches) < 2:
        raise ValueError("limsup estimate needs at least two branches")
    fine, prev = fam.branches[-1].polyline(), fam.branches[-2].polyline()
    d = _point_to_polyline(fine, prev)
    p95 = float(np.percentile(d, 95))
    gaps = np.asarray(fam.hausdorff_gaps)
    divergent = bool(np.any(np.diff(gaps) > 0))
    return LimsupEstimate(fine, d, p95, bool(p95 < limsup_tol), divergent)


# --- rescaling ----------------------------------------------------------------------------

def rescale_point_to_P(pt: SolutionPoint, p: float, q: float) -> SolutionPoint:
    """(mu, v) -> (lam, u) with lam = mu^((p-q)/(p-2)), u = lam^(1/(p-q)) v."""
    if pt.param < 0:
        raise ValueError("rescaling needs a non-negative parameter")
    lam = pt.param ** ((p - q) / (p - 2.0))
    t = lam ** (1.0 / (p - q))
    # when v solves the Q problem, u = t v solves the P problem with residual t * R_Q
    u = t * pt.v
    return SolutionPoint(float(lam), u, t * pt.residual_norm, float(np.min(u)), Frame.P)


def rescale_point_to_Q(pt: SolutionPoint, p: float, q: float) -> SolutionPoint:
    """Inverse map (lam, u) -> (mu, v); undefined at lam = 0."""
    if not pt.param > 0:
        raise ValueError("inverse rescaling needs a positive parameter")
    mu = pt.param ** ((p - 2.0) / (p - q))
    t = pt.param ** (1.0 / (p - q))
    v = pt.v / t
    return SolutionPoint(float(mu), v, pt.residual_norm / t, float(np.min(v)), Frame.Q)


def rescale_to_P(b: Branch, p: float, q: float) -> Branch:
    if not b.frame.is_q:
        raise ValueError("rescale_to_P expects a Q-frame branch")
    pts = [rescale_point_to_P(pt, p, q) for pt in b.points]
    bif = b.bif_param ** ((p - q) / (p - 2.0)) if np.isfinite(b.bif_param) else b.bif_param
    return replace(b, points=pts, frame=Frame.P, bif_param=bif, folds=list(b.folds), source=b)


# --- loop classification ---------------------------------------------------------------------

@dataclass(frozen=True)
class LoopReport:
    starts_at_origin: bool
    ends_at_origin: bool
    all_lambda_nonneg: bool
    no_trivial_interior: bool
    two_solutions_at_small_lambda: bool
    lambda_probe: float
    max_lambda: float
    max_norm: float
    origin_tol: float = 0.0
    probe_separation: float = 0.0
    probe_norms: tuple[float, ...] = ()

    @property
    def is_loop(self) -> bool:
        return all((self.starts_at_origin, self.ends_at_origin, self.all_lambda_nonneg,
                    self.no_trivial_interior, self.two_solutions_at_small_lambda))


def branch_solutions_at_lambda(b: Branch, lam: float, prob_Q: Problem | None = None,
                               ctl: StepControl | None = None) -> list[SolutionPoint]:
    """Solutions at lam; a rescaled branch is refined in its Q frame and mapped back."""
    if b.source is not None and prob_Q is not None and lam > 0:
        p, q = prob_Q.params.p, prob_Q.params.q
        mu = lam ** ((p - 2.0) / (p - q))
        return [rescale_point_to_P(s, p, q) for s in solutions_at_param(b.source, mu, prob_Q, ctl)]
    return solutions_at_param(b, lam, None, ctl)


def classify_loop(b: Branch, lambda_probe: float, prob_Q: Problem | None = None,
                  ctl: StepControl | None = None, origin_tol: float | None = None,
                  origin_tol_rel: float = 0.05) -> LoopReport:
    """Loop properties of a P-frame branch.

    ``origin_tol`` defaults to ``origin_tol_rel`` times the branch extent
    max(max lambda, max |u|): at finite eps the branch starts at (lam_eps, 0),
    which only approaches the origin as eps -> 0.
    """
    ctl = ctl or StepControl()
    lam, nrm = b.params, b.norms
    max_lam, max_nrm = float(lam.max()), float(nrm.max())
    if origin_tol is None:
        origin_tol = origin_tol_rel * max(max_lam, max_nrm)
    at_origin = lambda i: bool(np.hypot(lam[i], nrm[i]) <= origin_tol)
    interior = np.arange(1, len(b) - 1)
    no_triv = bool(np.all((lam[interior] <= origin_tol) | (nrm[interior] > ctl.trivial_tol)))
    sols = []
    if 0 < lambda_probe < max_lam:
        sols = [s for s in branch_solutions_at_lambda(b, lambda_probe, prob_Q, ctl)
                if s.norm_inf > ctl.trivial_tol and s.min_v >= -1e-12 * (1 + s.norm_inf)]
    sep = max((float(np.max(np.abs(s1.v - s2.v))) for i, s1 in enumerate(sols) for s2 in sols[i + 1:]),
              default=0.0)
    return LoopReport(
        starts_at_origin=at_origin(0), ends_at_origin=at_origin(-1),
        all_lambda_nonneg=bool(lam.min() >= -ctl.param_tol), no_trivial_interior=no_triv,
        two_solutions_at_small_lambda=len(sols) >= 2 and sep > ctl.sol_sep_tol,
        lambda_probe=float(lambda_probe), max_lambda=max_lam, max_norm=max_nrm,
        origin_tol=float(origin_tol), probe_separation=sep,
        probe_norms=tuple(sorted(s.norm_inf for s in sols)),
    )


def loop_report(cfg: RunConfig, fam: FamilyResult | None = None) -> tuple[LoopReport, Branch, FamilyResult]:
    """Trace the family, rescale its finest member and classify it."""
    fam = fam or trace_family(cfg)
    prob_Q = cfg.problem(fam.eps_sequence[-1], Frame.Q)
    pb = rescale_to_P(fam.branches[-1], prob_Q.params.p, prob_Q.params.q)
    c = cfg.continuation
    rep = classify_loop(pb, c.lambda_probe, prob_Q, c.step_control(), origin_tol_rel=c.origin_tol_rel)
    return rep, pb, fam


# --- two-sided split ------------------------------------------------------------------------

@dataclass
class SigmaSplit:
    sigma_plus: Branch
    sigma_minus: Branch
    crossing_points: list[SolutionPoint]
    eps_sequence: list[float] = field(default_factory=list)
    lambda_eps_values: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    delta_floor: float = 0.0
    flagged: bool = False
    branches: list[Branch] = field(default_factory=list, repr=False)

    @property
    def delta_ratio(self) -> float:
        """Ratio of the crossing-norm floors at the last two eps values (>= 1)."""
        if len(self.deltas) < 2 or min(self.deltas[-2:]) <= 0:
            return float("nan")
        d0, d1 = self.deltas[-2:]
        return max(d0, d1) / min(d0, d1)


def _zero_crossings(b: Branch, prob: Problem, ctl: StepControl) -> list[tuple[int, SolutionPoint]]:
    """(index, refined point) for every sign change of lambda along the branch."""
    out = []
    pts = b.points
    for i in range(len(pts) - 1):
        l0, l1 = pts[i].param, pts[i + 1].param
        if abs(l0) <= ctl.param_tol or abs(l1) <= ctl.param_tol or l0 * l1 > 0:
            continue
        t = l0 / (l0 - l1)
        v = (1 - t) * pts[i].v + t * pts[i + 1].v
        try:
            pt = newton_solve(prob, v, 0.0, tol=ctl.newton_tol)
        except NewtonFailure:
            pt = SolutionPoint(0.0, v, float("nan"), float(np.min(v)), b.frame)
        out.append((i, pt))
    return out


def split_branch(b: Branch, prob: Problem, ctl: StepControl) -> tuple[Branch, Branch, list[SolutionPoint]]:
    """Cut a branch at its lambda = 0 crossings into its lambda >= 0 and lambda <= 0 parts."""
    crossings = dict(_zero_crossings(b, prob, ctl))
    plus, minus = [], []
    for i, pt in enumerate(b.points):
        if pt.param >= -ctl.param_tol:
            plus.append(pt)
        if pt.param <= ctl.param_tol:
            minus.append(pt)
        if i in crossings:
            plus.append(crossings[i])
            minus.append(crossings[i])
    mk = lambda pts, tag: replace(b, points=pts, folds=[], termination=TerminationKind(tag, (0.0, 0.0)))
    return mk(plus, "sigma_plus"), mk(minus, "sigma_minus"), list(crossings.values())


def delta_floor(prob: Problem) -> float:
    """5% of the constant-solution scale (|int b| / |int a|)^(1/(p-q))."""
    w, pr = prob.weights, prob.params
    if w.int_a == 0:
        return 0.0
    return 0.05 * (abs(w.int_b) / abs(w.int_a)) ** (1.0 / (pr.p - pr.q))


def _restrict(b: Branch, rho: float) -> Branch:
    return replace(b, points=[pt for pt in b.points if pt.norm_inf <= rho])


def sigma_split(cfg: RunConfig, eps_sequence=None, rho: float | None = None) -> SigmaSplit:
    seq = list(cfg.continuation.eps_sequence if eps_sequence is None else eps_sequence)
    if not seq:
        raise ValueError("eps_sequence must not be empty")
    prob0 = cfg.problem(seq[0], Frame.P_EPS)
    rep = check_hypotheses(prob0.weights)
    if rep.case_tag != "prehypo":
        raise ConfigError(f"sigma needs the prehypo case (int a < 0, int b <= 0, both weights "
                          f"changing sign); this config is {rep.case_tag}")
    c = cfg.continuation
    rho = c.rho if rho is None else rho
    rho = np.inf if rho is None else rho
    ctl = c.step_control()
    floor = delta_floor(prob0)
    branches, lams, deltas, flagged = [], [], [], False
    split = None
    for eps in seq:
        prob = prob0.with_params(eps=eps)
        spec = principal_eigenpair_neumann(prob.grid, prob.concave_weight(), eps, prob.params.q)
        b = trace_from_bifurcation(prob, spec, "mu_eps", ctl=ctl, rho=rho, s0=c.s0)
        if b.termination.tag != "returns_to_gamma0_at_zero":
            # the other end of the component, entered from the constant eigenfunction
            log.info("eps=%g: trace from lam_eps ended with %s; tracing from (0, 0)", eps, b.termination.tag)
            b_zero = trace_from_bifurcation(prob, spec, "zero", ctl=ctl, rho=rho, s0=c.s0)
            b = replace(b, points=b.points + b_zero.points[::-1], termination=b_zero.termination)
        plus, minus, cross = split_branch(b, prob, ctl)
        big = [pt.norm_inf for pt in cross if pt.norm_inf > floor]
        if not big:
            flagged = True
            log.warning("eps=%g: no lambda = 0 crossing with |u| above %.3g", eps, floor)
        deltas.append(min(big) if big else 0.0)
        branches.append(b)
        lams.append(spec.mu_eps)
        split = (plus, minus, cross)
    plus, minus, cross = split
    return SigmaSplit(_restrict(plus, rho), _restrict(minus, rho), [pt for pt in cross if pt.norm_inf <= rho],
                      seq, lams, deltas, floor, flagged, branches)
