"""Principal eigenvalue mu_eps against eps and grid size for b = cos(2 pi x) - 0.5."""
import argparse
import csv
from pathlib import Path

import numpy as np

from loopbif.mesh import build_grid
from loopbif.spectra import principal_eigenpair_neumann


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=1.5)
    ap.add_argument("--out", default="out/eigen_scaling")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    eps_values = np.logspace(-4, -1, 7)
    with open(out / "mu_eps.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "eps", "mu_eps", "nu1", "mu_eps_over_eps_pow"])
        for n in (129, 257, 513, 1025, 2049):
            g = build_grid(n)
            b = np.cos(2 * np.pi * g.nodes) - 0.5
            for eps in eps_values:
                r = principal_eigenpair_neumann(g, b, eps, args.q)
                wr.writerow([n, f"{eps:.17g}", f"{r.mu_eps:.17g}", f"{r.nu_unscaled:.17g}",
                             f"{r.mu_eps / eps ** (2 - args.q):.17g}"])
            slope = np.polyfit(np.log(eps_values), np.log(
                [principal_eigenpair_neumann(g, b, e, args.q).mu_eps for e in eps_values]), 1)[0]
            print(f"n={n:5d} nu1={r.nu_unscaled:.12f} log-log slope={slope:.15f}")


if __name__ == "__main__":
    main()
