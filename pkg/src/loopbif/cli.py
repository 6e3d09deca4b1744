"""Command line entry point: ``loopbif <command> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, bundled_config, load_config
from .continuation import Branch
from .mesh import ConfigError, Frame
from .spectra import SpectrumError, principal_eigenpair_neumann
from .system import NewtonFailure, cstar, cstar_residual

COMMANDS = ("eigen", "cstar", "trace", "family", "loop", "sigma", "verify")
BRANCH_COLUMNS = ("eps", "frame", "index", "param", "norm_inf", "norm_l2", "min_v", "residual_norm")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, (str, Frame)):
        return str(x.value if isinstance(x, Frame) else x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return format(float(x), ".17g")


def _write(path: Path, lines: list[str]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_table(path: Path, header, rows) -> Path:
    return _write(path, [",".join(header)] + [",".join(fmt(x) for x in row) for row in rows])


def report_lines(items: dict) -> list[str]:
    return [f"{k} = {' '.join(fmt(x) for x in v) if isinstance(v, (list, tuple)) else fmt(v)}"
            for k, v in items.items()]


def write_report(path: Path, items: dict) -> Path:
    return _write(path, report_lines(items))


def branch_rows(b: Branch, quad_weights: np.ndarray | None = None):
    for i, pt in enumerate(b.points):
        w = quad_weights if quad_weights is not None and quad_weights.size == pt.v.size else None
        l2 = np.sqrt(np.sum(w * pt.v ** 2)) if w is not None else np.linalg.norm(pt.v) / np.sqrt(pt.v.size)
        yield (b.eps, b.frame, i, pt.param, pt.norm_inf, l2, pt.min_v, pt.residual_norm)


def emit_branch(b: Branch, out: Path, stem: str, quad_weights=None) -> list[Path]:
    """Branch CSV, metadata sidecar and plot-ready (param, norm_inf) file."""
    files = [write_table(out / f"{stem}.csv", BRANCH_COLUMNS, branch_rows(b, quad_weights))]
    term = b.termination
    files.append(write_report(out / f"{stem}.meta.txt", {
        "origin": b.origin, "frame": b.frame, "eps": b.eps, "points": len(b),
        "termination": term.tag if term else "none",
        "location_param": term.location[0] if term else None,
        "location_norm": term.location[1] if term else None,
        "detail": term.detail if term and term.detail else "-",
        "folds": list(b.folds) or ["-"],
    }))
    files.append(write_table(out / f"{stem}.plot.csv", ("param", "norm_inf"),
                             ((pt.param, pt.norm_inf) for pt in b.points)))
    return files


def _stem(eps: float) -> str:
    return f"branch_eps{eps:g}"


# --- commands ------------------------------------------------------------------------

def cmd_eigen(cfg: RunConfig, args, out: Path) -> tuple[int, list[str]]:
    eps = args.eps if args.eps is not None else cfg.continuation.eps
    prob = cfg.problem(eps, Frame.Q)
    rep = principal_eigenpair_neumann(prob.grid, prob.weights.b_samples, eps, prob.params.q)
    items = {"eps": eps, "q": rep.q, "principal_values": rep.principal_values, "mu_eps": rep.mu_eps,
             "nu_unscaled": rep.nu_unscaled, "transversality_integral": rep.transversality_integral,
             "eigenfunction_min": float(rep.positive_pair.eigfun.min())}
    write_report(out / "eigen.txt", items)
    write_table(out / "eigenfunction.csv", ("x", "phi"), zip(prob.grid.nodes, rep.positive_pair.eigfun))
    return EXIT_OK, report_lines(items)


def cmd_cstar(cfg: RunConfig, args, out: Path):
    prob = cfg.problem(0.0, Frame.Q)
    w, pr = prob.weights, prob.params
    rows = []
    for eps in list(cfg.continuation.eps_sequence) + [0.0]:
        c = cstar(eps, w, pr)
        rows.append((eps, c, cstar_residual(c, eps, w, pr)))
    write_table(out / "cstar.csv", ("eps", "cstar_eps", "residual"), rows)
    return EXIT_OK, [f"eps={fmt(e)} cstar={fmt(c)}" for e, c, _ in rows]


def cmd_trace(cfg: RunConfig, args, out: Path):
    from .family import trace_one

    eps = args.eps if args.eps is not None else cfg.continuation.eps
    b, mu = trace_one(cfg, eps)
    emit_branch(b, out, _stem(eps), cfg.build_grid().quad_weights)
    return EXIT_OK, [f"eps={fmt(eps)} bif_param={fmt(mu)} points={len(b)} termination={b.termination.tag}"]


def _emit_family(fam, out: Path, qw) -> list[str]:
    rows = []
    gaps = [None] + list(fam.hausdorff_gaps)
    for eps, b, mu, cs, gap in zip(fam.eps_sequence, fam.branches, fam.mu_eps_values, fam.cstar_values, gaps):
        emit_branch(b, out, _stem(eps), qw)
        rows.append((eps, mu, cs, gap, b.termination.tag))
    write_table(out / "family_summary.csv", ("eps", "mu_eps", "cstar_eps", "hausdorff_gap", "termination_tag"), rows)
    return [",".join(fmt(x) for x in r) for r in rows]


def cmd_family(cfg: RunConfig, args, out: Path):
    from .family import limsup_estimate, trace_family

    fam = trace_family(cfg)
    lines = _emit_family(fam, out, cfg.build_grid().quad_weights)
    if len(fam.branches) >= 2:
        est = limsup_estimate(fam, cfg.continuation.limsup_tol)
        write_report(out / "limsup.txt", {"percentile95": est.percentile95, "limsup_tol": cfg.continuation.limsup_tol,
                                          "accepted": est.accepted, "divergent": est.divergent})
        lines.append(f"limsup accepted={fmt(est.accepted)} p95={fmt(est.percentile95)}")
    return EXIT_OK, lines


def cmd_loop(cfg: RunConfig, args, out: Path):
    from .family import loop_report

    rep, pb, fam = loop_report(cfg)
    lines = _emit_family(fam, out, cfg.build_grid().quad_weights)
    emit_branch(pb, out, "loop_P", cfg.build_grid().quad_weights)
    items = {k: getattr(rep, k) for k in rep.__dataclass_fields__}
    items["probe_norms"] = list(rep.probe_norms) or ["-"]
    items["is_loop"] = rep.is_loop
    write_report(out / "loop_report.txt", items)
    return EXIT_OK, lines + report_lines(items)


def cmd_sigma(cfg: RunConfig, args, out: Path):
    from .family import sigma_split

    s = sigma_split(cfg)
    qw = cfg.build_grid().quad_weights
    emit_branch(s.sigma_plus, out, "sigma_plus", qw)
    emit_branch(s.sigma_minus, out, "sigma_minus", qw)
    write_table(out / "sigma_crossings.csv", ("param", "norm_inf", "min_v", "residual_norm"),
                ((c.param, c.norm_inf, c.min_v, c.residual_norm) for c in s.crossing_points))
    items = {"eps_sequence": s.eps_sequence, "lambda_eps": s.lambda_eps_values, "deltas": s.deltas,
             "delta_floor": s.delta_floor, "delta_ratio": s.delta_ratio, "flagged": s.flagged,
             "sigma_plus_points": len(s.sigma_plus), "sigma_minus_points": len(s.sigma_minus),
             "sigma_plus_max_param": float(s.sigma_plus.params.max()),
             "sigma_minus_min_param": float(s.sigma_minus.params.min()),
             "crossings": len(s.crossing_points)}
    write_report(out / "sigma_report.txt", items)
    return EXIT_OK, report_lines(items)


def cmd_verify(cfg: RunConfig, args, out: Path):
    from .checks import run_checks

    results = run_checks(cfg, args.seed)
    rows = [(r.name, "pass" if r.passed else "FAIL", r.value, r.threshold, r.note or "-") for r in results]
    write_table(out / "verify.csv", ("check", "status", "value", "threshold", "note"), rows)
    status = EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
    return status, [f"{r[1]:4s} {r[0]} value={fmt(r[2])} threshold={fmt(r[3])}" for r in rows]


HANDLERS = {"eigen": cmd_eigen, "cstar": cmd_cstar, "trace": cmd_trace, "family": cmd_family,
            "loop": cmd_loop, "sigma": cmd_sigma, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopbif", description="Bifurcation loops for indefinite concave-convex problems")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", default="main_case",
                    help="JSON config path, or the name of a bundled config (main_case, prehypo)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="random seed (default: config seed)")
    ap.add_argument("--eps", type=float, default=None, help="regularization override for trace and eigen")
    ap.add_argument("--quiet", action="store_true")
    return ap


def resolve_config(name: str) -> RunConfig:
    path = Path(name)
    if not path.exists() and path.suffix == "" and (Path(__file__).parent / "configs" / f"{name}.json").exists():
        return bundled_config(name)
    return load_config(path)


def run(command: str, config: str, out: str, seed: int | None = None, eps: float | None = None,
        quiet: bool = True) -> int:
    args = argparse.Namespace(command=command, config=config, out=out, seed=seed, eps=eps, quiet=quiet)
    return _dispatch(args)


def _dispatch(args) -> int:
    try:
        cfg = resolve_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.eps is not None and not 0 < args.eps <= 1:
            raise ConfigError(f"--eps must lie in (0, 1], got {args.eps}")
        status, lines = HANDLERS[args.command](cfg, args, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpectrumError, NewtonFailure, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if not args.quiet:
        print("\n".join(lines))
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    return _dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
