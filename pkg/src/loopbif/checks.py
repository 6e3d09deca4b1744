"""Invariant checks run by ``loopbif verify``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .continuation import Branch
from .mesh import Frame, build_grid, sample_weights
from .spectra import principal_eigenpair_neumann
from .system import Problem, SolutionPoint, cstar, cstar_residual, divergence_residual, random_positive_starts

SCALING_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    note: str = ""


def jacobian_fd_error(prob: Problem, param: float, v: np.ndarray, direction: np.ndarray, h: float = 1e-6) -> float:
    """Relative gap between J d and the central difference of the residual along d."""
    Jd = prob.jacobian(param, v).matvec(direction)
    fd = (prob.residual(param, v + h * direction) - prob.residual(param, v - h * direction)) / (2 * h)
    return float(np.max(np.abs(Jd - fd)) / np.max(np.abs(Jd)))


def check_jacobian(prob: Problem, seed: int = 42, n_states: int = 10, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for v in random_positive_starts(prob.grid, n_states, seed):
        param = rng.uniform(0.1, 30.0)
        d = rng.standard_normal(prob.grid.n)
        # the difference step is relative to the state so rounding and truncation balance
        worst = max(worst, jacobian_fd_error(prob, param, v, d, h=1e-5 * np.max(np.abs(v))))
    return CheckResult("jacobian_fd", worst < tol, worst, tol)


def check_roundtrip(p: float, q: float, lam: float = 0.37, tol: float = 1e-12, n: int = 65) -> CheckResult:
    from .family import rescale_point_to_P, rescale_point_to_Q

    u = 1.0 + 0.5 * np.cos(np.linspace(0.0, np.pi, n))
    pt = SolutionPoint(lam, u, 0.0, float(u.min()), Frame.P)
    back = rescale_point_to_P(rescale_point_to_Q(pt, p, q), p, q)
    err = max(abs(back.param - lam) / lam, float(np.max(np.abs(back.v - u)) / np.max(np.abs(u))))
    return CheckResult("scaling_roundtrip", err <= tol, err, tol)


def eigen_slope(g, b, q: float, eps_values=SCALING_EPS) -> float:
    mus = [principal_eigenpair_neumann(g, b, e, q).mu_eps for e in eps_values]
    return float(np.polyfit(np.log(eps_values), np.log(mus), 1)[0])


def check_eigen_scaling(cfg: RunConfig, tol: float = 1e-6) -> CheckResult:
    prob = cfg.problem(1e-2, Frame.Q)
    slope = eigen_slope(prob.grid, prob.weights.b_samples, prob.params.q)
    err = abs(slope - (2.0 - prob.params.q))
    return CheckResult("eigen_scaling_law", err <= tol, err, tol, f"slope={slope:.12g}")


def grid_error_ratio(weights: dict, q: float, sizes=(513, 1025), oracle_n: int = 8193) -> float:
    def nu(n):
        g = build_grid(n)
        return principal_eigenpair_neumann(g, sample_weights(weights, g).b_samples, 1.0, q).nu_unscaled

    ref = nu(oracle_n)
    e0, e1 = (abs(nu(n) - ref) for n in sizes)
    return e0 / e1


def check_grid_convergence(cfg: RunConfig) -> CheckResult:
    r = grid_error_ratio(cfg.weights, cfg.params.q)
    return CheckResult("grid_convergence_ratio", 3.5 <= r <= 4.5, r, 4.0, "accepted range [3.5, 4.5]")


def check_cstar(cfg: RunConfig, tol: float = 1e-13) -> CheckResult:
    prob = cfg.problem(0.0, Frame.Q)
    w, pr = prob.weights, prob.params
    try:
        worst = max(abs(cstar_residual(cstar(e, w, pr), e, w, pr)) for e in cfg.continuation.eps_sequence)
    except ValueError as exc:
        return CheckResult("cstar_residual", True, 0.0, tol, f"skipped: {exc}")
    return CheckResult("cstar_residual", worst < tol, worst, tol)


def check_divergence(prob: Problem, b: Branch, newton_tol: float, param_min: float = 0.05) -> CheckResult:
    bound = prob.grid.n * newton_tol / param_min
    vals = [divergence_residual(prob, pt) for pt in b.points if pt.param >= param_min]
    worst = max(vals, default=0.0)
    return CheckResult("divergence_identity", worst <= bound, worst, bound, f"{len(vals)} points")


def run_checks(cfg: RunConfig, seed: int | None = None) -> list[CheckResult]:
    from .family import trace_one

    seed = cfg.seed if seed is None else seed
    eps = cfg.continuation.eps
    prob = cfg.problem(eps)
    b, _ = trace_one(cfg, eps)
    return [
        check_divergence(prob, b, cfg.continuation.newton_tol),
        check_jacobian(prob, seed),
        check_roundtrip(cfg.params.p, cfg.params.q),
        check_eigen_scaling(cfg),
        check_grid_convergence(cfg),
        check_cstar(cfg),
    ]
