from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.distance import directed_hausdorff

from loopbif.config import DEFAULT_EPS_SEQUENCE
from loopbif.continuation import Branch, TerminationKind
from loopbif.family import (FamilyResult, classify_loop, hausdorff, limsup_estimate, loop_report,
                            rescale_point_to_P, rescale_point_to_Q, rescale_to_P, sigma_split, trace_family)
from loopbif.mesh import ConfigError, Frame
from loopbif.system import SolutionPoint

CSTAR0 = 0.5 ** (2.0 / 3.0)


def _pt(param, v, frame=Frame.Q):
    v = np.asarray(v, dtype=float)
    return SolutionPoint(float(param), v, 0.0, float(v.min()), frame)


def _branch(points, frame=Frame.Q, eps=0.1):
    return Branch(points, eps, "user_seed", frame, termination=TerminationKind("step_failure", (0.0, 0.0)))


def _line_branch(xy):
    return _branch([_pt(x, [y, 0.5 * y]) for x, y in xy])


def test_rescale_arithmetic():
    v = np.array([0.5, 1.0, 2.0])
    pt = rescale_point_to_P(_pt(4.0, v), 3.0, 1.5)
    assert pt.param == pytest.approx(8.0, rel=1e-15)
    np.testing.assert_allclose(pt.v, 4.0 * v, rtol=1e-15)
    assert pt.frame is Frame.P


def test_rescale_collapses_constant_line_to_origin():
    pt = rescale_point_to_P(_pt(0.0, np.full(5, CSTAR0)), 3.0, 1.5)
    assert pt.param == 0.0 and np.all(pt.v == 0.0)


def test_roundtrip_identity():
    u = np.linspace(0.1, 2.0, 17)
    back = rescale_point_to_P(rescale_point_to_Q(_pt(0.37, u, Frame.P), 3.0, 1.5), 3.0, 1.5)
    assert abs(back.param - 0.37) <= 1e-12 * 0.37
    np.testing.assert_allclose(back.v, u, rtol=1e-12, atol=0)


def test_rescale_errors():
    with pytest.raises(ValueError):
        rescale_point_to_P(_pt(-1.0, [1.0]), 3.0, 1.5)
    with pytest.raises(ValueError):
        rescale_point_to_Q(_pt(0.0, [1.0], Frame.P), 3.0, 1.5)
    with pytest.raises(ValueError):
        rescale_to_P(_branch([_pt(1.0, [1.0])], Frame.P), 3.0, 1.5)


def _densify(line, k=200):
    t = np.linspace(0, 1, k)[:, None]
    return np.vstack([a + t * (b - a) for a, b in zip(line[:-1], line[1:])])


def test_hausdorff_against_dense_point_sets(rng):
    for _ in range(5):
        a = np.cumsum(rng.random((6, 2)), axis=0)
        b = a + 0.3 * rng.standard_normal((6, 2))
        da, db = _densify(a), _densify(b)
        oracle = max(directed_hausdorff(da, db)[0], directed_hausdorff(db, da)[0])
        assert hausdorff(a, b) == pytest.approx(oracle, rel=1e-3, abs=1e-3)


def test_hausdorff_simple_cases():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, a + [0.0, 1.0]) == pytest.approx(1.0)


def _family(branches):
    gaps = [hausdorff(b0.polyline(), b1.polyline()) for b0, b1 in zip(branches, branches[1:])]
    n = len(branches)
    return FamilyResult(list(np.geomspace(0.1, 0.001, n)), branches, gaps, [1.0] * n, [None] * n)


def test_limsup_identical_branches():
    b = _line_branch([(0, 0), (1, 1), (2, 0.5)])
    est = limsup_estimate(_family([b, b, b]))
    assert est.accepted and not est.divergent
    assert np.all(est.distances == 0)


def test_limsup_rejects_gap_one():
    b0 = _line_branch([(0, 0), (1, 0)])
    b1 = _line_branch([(0, 1), (1, 1)])
    est = limsup_estimate(_family([b0, b1]))
    assert not est.accepted and est.percentile95 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        limsup_estimate(_family([b0]))


def test_limsup_flags_growing_gaps():
    bs = [_line_branch([(0, y), (1, y)]) for y in (0.0, 0.1, 0.5)]
    assert limsup_estimate(_family(bs)).divergent


def test_single_point_loop():
    rep = classify_loop(_branch([_pt(0.0, [0.0, 0.0], Frame.P)], Frame.P), 0.1)
    assert rep.starts_at_origin and rep.ends_at_origin
    assert not rep.two_solutions_at_small_lambda


def test_empty_eps_sequence(main_cfg):
    with pytest.raises(ValueError):
        trace_family(main_cfg, [])
    with pytest.raises(ValueError):
        trace_family(main_cfg, [1e-2, 1e-1])


def test_family_structure(main_family):
    fam = main_family
    assert fam.eps_sequence == list(DEFAULT_EPS_SEQUENCE)
    assert all(b.termination.tag in ("meets_gamma00", "hits_norm_cap_rho") for b in fam.branches)
    assert np.all(np.diff(fam.mu_eps_values) < 0)
    np.testing.assert_allclose(fam.mu_eps_values, fam.nu_unscaled * np.sqrt(fam.eps_sequence), rtol=1e-13)
    assert np.all(np.diff(fam.cstar_values) > 0) and fam.cstar_values[-1] < CSTAR0
    assert np.all(np.diff(fam.hausdorff_gaps) < 0)
    assert all(b.params.max() <= fam.Lambda for b in fam.branches)


def test_family_meets_constant_line_near_cstar(main_family):
    for b, c in zip(main_family.branches, main_family.cstar_values):
        if b.termination.tag == "meets_gamma00":
            assert abs(b.points[-1].v.mean() - c) < 1e-3


def test_limsup_of_main_family(main_family):
    est = limsup_estimate(main_family)
    assert est.accepted and not est.divergent
    # the origin is approached through the bifurcation points (mu_eps, 0)
    starts = np.array([np.hypot(*b.polyline()[0]) for b in main_family.branches])
    assert np.all(np.diff(starts) < 0)
    assert np.hypot(*est.polyline[0]) == starts[-1]


def test_main_loop_report(main_loop):
    rep, pb, _ = main_loop
    assert rep.is_loop
    assert rep.probe_separation >= 1e-3
    assert pb.frame is Frame.P
    assert pb.points[-1].param == 0.0 and pb.points[-1].norm_inf == 0.0


def test_small_rho_is_reported_honestly(main_cfg):
    cfg = replace(main_cfg, continuation=replace(main_cfg.continuation, rho=0.3, eps_sequence=(1e-1, 1e-2)))
    rep, pb, fam = loop_report(cfg)
    assert fam.branches[-1].termination.tag == "hits_norm_cap_rho"
    assert not rep.ends_at_origin


def test_sigma_precondition(main_cfg):
    with pytest.raises(ConfigError, match="prehypo"):
        sigma_split(main_cfg, [1e-2])


def test_sigma_split_two_sided(prehypo_split):
    s = prehypo_split
    lam_m, nrm_m = s.sigma_minus.params, s.sigma_minus.norms
    assert np.any((lam_m < -1e-4) & (nrm_m > 1e-6))
    assert np.any(s.sigma_plus.params > 1e-4)
    assert s.sigma_plus.params.min() >= -1e-6 and lam_m.max() <= 1e-6
    assert not s.flagged
    assert s.crossing_points and all(c.norm_inf >= s.delta_floor for c in s.crossing_points)
    assert s.delta_ratio <= 2.0
    assert s.lambda_eps_values[0] > s.lambda_eps_values[1] > 0


def test_sigma_split_covers_component(prehypo_split):
    b = prehypo_split.branches[-1]
    n_plus, n_minus = len(prehypo_split.sigma_plus), len(prehypo_split.sigma_minus)
    n_both = sum(abs(p) <= 1e-6 for p in b.params)
    n_cross = len(prehypo_split.crossing_points)
    assert n_plus + n_minus == len(b) + n_both + 2 * n_cross
    assert b.termination.tag == "returns_to_gamma0_at_zero"
