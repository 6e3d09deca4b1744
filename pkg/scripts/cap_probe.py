"""Parameter cap and positivity probes below and beyond it."""
import argparse

from loopbif.cli import resolve_config
from loopbif.mesh import Frame
from loopbif.spectra import default_ball, dirichlet_ball_eigenpair, parameter_cap
from loopbif.system import nonexistence_probe_lambda0, positivity_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="main_case")
    ap.add_argument("--starts", type=int, default=20)
    args = ap.parse_args()
    cfg = resolve_config(args.config)
    prob = cfg.problem(cfg.continuation.eps, Frame.Q)
    ball = default_ball(prob.weights)
    mu_D = dirichlet_ball_eigenpair(prob.grid, prob.weights.a_samples, ball).value
    lam = parameter_cap(prob.grid, prob.weights, prob.params, ball)
    print(f"ball nodes {ball}, Dirichlet eigenvalue {mu_D:.6g}, Lambda {lam:.6g}")
    for mult in (0.5, 1.0, 1.5):
        rep = positivity_probe(prob, mult * lam, args.starts, seed=cfg.seed)
        print(f"mu = {mult:.1f} Lambda: nontrivial non-negative solutions found = {rep.nontrivial_found}")
    rep = nonexistence_probe_lambda0(prob, args.starts, cfg.seed)
    print("lambda = 0:", sorted({o.status for o in rep.outcomes}))


if __name__ == "__main__":
    main()
