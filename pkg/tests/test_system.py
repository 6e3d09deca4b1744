import numpy as np
import pytest

from loopbif.checks import jacobian_fd_error
from loopbif.mesh import Frame, ProblemParams, make_weights, trapezoid_integral
from loopbif.system import (JacobianSingular, NewtonFailure, Problem, concave_term, concave_term_deriv, cstar,
                            cstar_residual, divergence_residual, newton_solve, nonexistence_probe_lambda0,
                            random_positive_starts)

from conftest import main_setup

CSTAR0 = 0.5 ** (2.0 / 3.0)


@pytest.fixture(scope="module")
def setup():
    return main_setup()


def make_problem(setup, eps=1e-2, frame=Frame.Q):
    g, w = setup
    return Problem(g, w, ProblemParams(3.0, 1.5, eps=eps, frame=frame))


def test_cstar_closed_form_at_zero(setup):
    _, w = setup
    assert cstar(0.0, w, ProblemParams(3.0, 1.5)) == pytest.approx(CSTAR0, rel=1e-14)


def test_cstar_decreasing_in_eps_with_tiny_residual(setup):
    _, w = setup
    pr = ProblemParams(3.0, 1.5)
    eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    cs = [cstar(e, w, pr) for e in eps]
    assert all(c0 < c1 for c0, c1 in zip(cs, cs[1:]))
    assert all(abs(cstar_residual(c, e, w, pr)) < 1e-13 for c, e in zip(cs, eps))
    assert abs(cs[-1] - CSTAR0) < 1e-4


def test_cstar_undefined_without_sign_conditions(setup):
    g, _ = setup
    pr = ProblemParams(3.0, 1.5)
    with pytest.raises(ValueError, match="constant limit undefined"):
        cstar(0.0, make_weights(g, -np.ones(g.n), -np.ones(g.n)), pr)
    with pytest.raises(ValueError, match="constant limit undefined"):
        cstar(0.0, make_weights(g, np.ones(g.n), np.ones(g.n)), pr)


def test_constants_solve_zero_parameter_problem(setup):
    prob = make_problem(setup)
    c = np.full(prob.grid.n, 0.7)
    assert np.all(prob.residual(0.0, c) == 0.0)


def test_cstar_balances_integrated_rhs(setup):
    prob = make_problem(setup, eps=1e-2)
    c = cstar(1e-2, prob.weights, prob.params)
    assert abs(trapezoid_integral(prob.grid, prob.rhs_dparam(1.0, np.full(prob.grid.n, c)))) < 1e-14


@pytest.mark.parametrize("frame", list(Frame))
def test_jacobian_matches_central_differences(setup, frame, rng):
    prob = make_problem(setup, eps=1e-2, frame=frame)
    for v in random_positive_starts(prob.grid, 3, seed=1):
        d = rng.standard_normal(prob.grid.n)
        assert jacobian_fd_error(prob, 7.5, v, d, h=1e-5 * v.max()) < 1e-6


def test_concave_term_is_continuous_and_linear_below_zero():
    s = np.array([-1e-3, -1e-12, 0.0, 1e-12, 1e-3])
    T = concave_term(s, 0.01, 1.5)
    assert T[0] == pytest.approx(0.01 ** -0.5 * -1e-3)
    assert abs(T[1] - T[3]) < 1e-9
    assert concave_term_deriv(np.array([0.0]), 0.01, 1.5)[0] == pytest.approx(10.0)
    np.testing.assert_allclose(concave_term(np.array([-4.0, 4.0]), 0.0, 1.5), [-2.0, 2.0])


def test_eps_zero_jacobian_singular_near_zero(setup):
    prob = make_problem(setup, eps=0.0)
    v = np.zeros(prob.grid.n)
    with pytest.raises(JacobianSingular):
        prob.rhs_dv(1.0, v)


def test_newton_finds_solution_near_constant_limit(setup):
    prob = make_problem(setup, eps=1e-2)
    c = cstar(1e-2, prob.weights, prob.params)
    pt = newton_solve(prob, np.full(prob.grid.n, c), 0.05)
    assert pt.residual_norm <= 1e-10 + prob.roundoff_floor(pt.v)
    assert pt.min_v > 0
    assert divergence_residual(prob, pt) < 513 * 1e-10 / 0.05


def test_newton_eps_zero_uses_homotopy(setup):
    prob = make_problem(setup, eps=0.0)
    pt = newton_solve(prob, np.full(prob.grid.n, CSTAR0), 0.05)
    assert pt.min_v > 0 and pt.residual_norm <= 1e-10 + prob.roundoff_floor(pt.v)


def test_newton_failure_reports_reason(setup):
    prob = make_problem(setup)
    with pytest.raises(NewtonFailure) as exc:
        newton_solve(prob, np.full(prob.grid.n, 5.0), 3.0, max_iter=0)
    assert exc.value.reason == "max_iter"
    with pytest.raises(ValueError):
        newton_solve(prob, np.ones(prob.grid.n), 1.0, tol=0.0)


def test_divergence_residual_undefined_at_zero(setup):
    prob = make_problem(setup)
    with pytest.raises(ValueError):
        divergence_residual(prob, prob.point(0.0, np.ones(prob.grid.n)))


def test_random_starts_positive_and_reproducible(setup):
    g, _ = setup
    a, b = random_positive_starts(g, 5, seed=7), random_positive_starts(g, 5, seed=7)
    assert all(np.array_equal(x, y) and x.min() > 0 for x, y in zip(a, b))


def test_lambda_zero_probe_finds_nothing(setup):
    rep = nonexistence_probe_lambda0(make_problem(setup), n_starts=20)
    assert rep.nontrivial_found == 0
    assert all(o.status in ("trivial", "no_convergence") for o in rep.outcomes)
