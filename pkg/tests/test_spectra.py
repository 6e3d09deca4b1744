import numpy as np
import pytest

from loopbif.mesh import build_grid, sample_weights
from loopbif.spectra import (MU_PER_DECADE, SpectrumError, cap_margin, s_scan, coarse_principal_spectrum, default_ball, dirichlet_ball_eigenpair,
                             mu_cap, parameter_cap, principal_eigenpair_neumann)
from loopbif.mesh import ProblemParams

from conftest import MAIN_WEIGHTS, main_setup

# nu_1 for b = cos(2 pi x) - 0.5 from the same solver at n = 8193 (second order, error ~ 5e-7 at n = 513)
NU1_FINE = 67.03806456262733


@pytest.mark.parametrize("offset", [-0.25, -0.5, -0.75])
def test_perron_root_matches_dense_oracle(offset):
    g = build_grid(129)
    b = np.cos(2 * np.pi * g.nodes) + offset
    dense = coarse_principal_spectrum(g, b)
    rep = principal_eigenpair_neumann(g, b, 1.0, 1.5)
    assert len(dense) == 2
    assert abs(dense[0]) < 1e-9
    assert rep.nu_unscaled == pytest.approx(dense[1], rel=1e-10)


def test_principal_pair_properties():
    g, w = main_setup()
    rep = principal_eigenpair_neumann(g, w.b_samples, 1e-2, 1.5)
    assert rep.principal_values[0] == 0.0
    assert rep.positive_pair.eigfun.min() > 0 and rep.positive_pair.eigfun.max() == 1.0
    assert rep.transversality_integral > 0
    assert rep.mu_eps == pytest.approx(rep.nu_unscaled * 1e-2 ** 0.5, rel=1e-13)


def test_nu1_converges_to_fine_grid_value():
    g, w = main_setup(1025)
    nu = principal_eigenpair_neumann(g, w.b_samples, 1.0, 1.5).nu_unscaled
    assert nu == pytest.approx(NU1_FINE, abs=5e-4)


def test_positive_weight_integral_has_no_positive_eigenvalue():
    g = build_grid(65)
    with pytest.raises(SpectrumError):
        principal_eigenpair_neumann(g, np.cos(2 * np.pi * g.nodes) + 0.5, 0.1, 1.5)
    with pytest.raises(SpectrumError):
        principal_eigenpair_neumann(g, -np.ones(g.n), 0.1, 1.5)


def test_dirichlet_ball_against_discrete_sine():
    g = build_grid(257)
    i0, i1 = 40, 200
    val = dirichlet_ball_eigenpair(g, np.ones(g.n), (i0, i1)).value
    Lb = (i1 - i0) * g.h
    exact = 2.0 / g.h ** 2 * (1.0 - np.cos(np.pi * g.h / Lb))
    assert val == pytest.approx(exact, rel=1e-12)


def test_dirichlet_ball_weight_scales_eigenvalue():
    g = build_grid(129)
    e1 = dirichlet_ball_eigenpair(g, np.ones(g.n), (10, 60)).value
    e4 = dirichlet_ball_eigenpair(g, 4.0 * np.ones(g.n), (10, 60)).value
    assert e4 == pytest.approx(e1 / 4.0, rel=1e-12)


def test_dirichlet_ball_requires_positive_a():
    g = build_grid(65)
    with pytest.raises(SpectrumError):
        dirichlet_ball_eigenpair(g, -np.ones(g.n), (5, 20))


def test_default_ball_inside_positive_set():
    g, w = main_setup()
    i0, i1 = default_ball(w)
    assert np.all(w.b_samples[i0:i1 + 1] > 0) and np.all(w.a_samples[i0:i1 + 1] > 0)


def test_cap_is_smallest_scanned_value_with_nonnegative_margin():
    g, w = main_setup()
    pr = ProblemParams(3.0, 1.5)
    ball = default_ball(w)
    mu_D = dirichlet_ball_eigenpair(g, w.a_samples, ball).value
    mu_bar = mu_cap(g, w, pr, ball, mu_D)
    assert parameter_cap(g, w, pr) == 2.0 * mu_bar
    a, b = w.a_samples[ball[0]:ball[1] + 1], w.b_samples[ball[0]:ball[1] + 1]
    assert cap_margin(mu_bar, a, b, 3.0, 1.5, mu_D, s_scan()) >= 0
    assert cap_margin(mu_bar / 10 ** (1 / MU_PER_DECADE), a, b, 3.0, 1.5, mu_D, s_scan()) < 0


def test_cap_not_found_for_tiny_scan():
    g = build_grid(65)
    w = sample_weights(MAIN_WEIGHTS, g)
    with pytest.raises(SpectrumError):
        mu_cap(g, w, ProblemParams(3.0, 1.5), default_ball(w), 1e12)
