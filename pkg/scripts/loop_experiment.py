"""Trace the eps-family for the main case, rescale the finest branch and classify the loop."""
import argparse
import logging
import time
from pathlib import Path

from loopbif.cli import emit_branch, report_lines, resolve_config, write_report
from loopbif.family import limsup_estimate, loop_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="main_case")
    ap.add_argument("--out", default="out/loop")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = resolve_config(args.config)
    out = Path(args.out)
    t0 = time.perf_counter()
    rep, pb, fam = loop_report(cfg)
    qw = cfg.build_grid().quad_weights
    for eps, b in zip(fam.eps_sequence, fam.branches):
        emit_branch(b, out, f"branch_eps{eps:g}", qw)
    emit_branch(pb, out, "loop_P", qw)
    est = limsup_estimate(fam, cfg.continuation.limsup_tol)
    items = {k: getattr(rep, k) for k in rep.__dataclass_fields__}
    items.update(hausdorff_gaps=fam.hausdorff_gaps, mu_eps=fam.mu_eps_values,
                 limsup_p95=est.percentile95, limsup_accepted=est.accepted,
                 seconds=time.perf_counter() - t0)
    write_report(out / "loop_report.txt", items)
    print("\n".join(report_lines(items)))


if __name__ == "__main__":
    main()
