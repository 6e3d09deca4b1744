"""Two-sided split of the prehypo component over a sequence of eps values."""
import argparse
import logging
from pathlib import Path

from loopbif.cli import emit_branch, report_lines, resolve_config, write_report
from loopbif.family import sigma_split


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="prehypo")
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--out", default="out/sigma")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = resolve_config(args.config)
    s = sigma_split(cfg, sorted(args.eps, reverse=True))
    out = Path(args.out)
    qw = cfg.build_grid().quad_weights
    for eps, b in zip(s.eps_sequence, s.branches):
        emit_branch(b, out, f"component_eps{eps:g}", qw)
    emit_branch(s.sigma_plus, out, "sigma_plus", qw)
    emit_branch(s.sigma_minus, out, "sigma_minus", qw)
    items = {"eps": s.eps_sequence, "lambda_eps": s.lambda_eps_values, "deltas": s.deltas,
             "delta_floor": s.delta_floor, "flagged": s.flagged,
             "crossing_norms": [c.norm_inf for c in s.crossing_points] or ["-"]}
    write_report(out / "sigma_report.txt", items)
    print("\n".join(report_lines(items)))


if __name__ == "__main__":
    main()
