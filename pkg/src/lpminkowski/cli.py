"""Command line entry point: ``lpminkowski solve | check | sweep``.

Exit codes: 0 success, 2 solvability condition violated, 3 flow failure,
4 verification failure, 1 bad input.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import itertools
import json
import logging
from pathlib import Path
import sys
import time

from . import measures, solver
from .solver import SolveConfig, SolveError

log = logging.getLogger("lpminkowski")

EXIT_OK = 0
EXIT_INPUT = 1

SWEEP_AXES = ("alpha", "mollify", "resolution")
SUMMARY_COLUMNS = ("run", "alpha", "mollify", "resolution", "status", "exit_code", "lambda",
                   "residual", "steps", "t_final", "wall_time", "message")


def _add_solve_args(p):
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--alpha", type=float, required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--density", default=None,
                     help="builtin density (uniform, cos2, bumps:SEED) or csv:PATH")
    src.add_argument("--measure", default=None, help="measure description file")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--mollify", type=int, default=0, help="mollification level k (0 = off)")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--tmax", type=float, default=100.0)
    p.add_argument("--dt-max", type=float, default=1e-2)
    p.add_argument("--initial", default="ball", help="ball or ellipse:RATIO")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-retry", action="store_true",
                   help="do not retry at doubled resolution after a failed verification")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lpminkowski",
        description="Solve the L_p Minkowski problem on S^1 and S^2 with a curvature flow.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve for one measure")
    _add_solve_args(p_solve)

    p_check = sub.add_parser("check", help="check the solvability condition only")
    p_check.add_argument("--measure", required=True)
    p_check.add_argument("--alpha", type=float, required=True)
    p_check.add_argument("--dim", type=int, choices=(1, 2), default=None)
    p_check.add_argument("--resolution", type=int, default=None)
    p_check.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="run a grid of solves in parallel")
    p_sweep.add_argument("--config", required=True, help="JSON sweep description")
    p_sweep.add_argument("--workers", type=int, default=None)
    return parser


def config_from_args(args):
    return SolveConfig(
        dim=args.dim, alpha=args.alpha, density=args.density or "uniform",
        measure=args.measure, resolution=args.resolution, mollify=args.mollify,
        dt_max=args.dt_max, t_max=args.tmax, tol=args.tol, out_dir=args.out, seed=args.seed,
        initial=args.initial, retry=not args.no_retry)


def _print_summary(report):
    v = report.verification
    print(f"status      {report.status}")
    print(f"flow        {report.flow_status} after {report.steps} steps, t = {report.t_final:.6g}")
    print(f"lambda      {report.lambda_:.10g}")
    print(f"residual    {v.residual:.3e} (tol {v.tol:.1e})")
    print(f"mass error  {v.lp_mass_rel_error:.3e}")
    if report.lambda_bound:
        print(f"lambda bound {report.lambda_bound['bound']:.6g} "
              f"({'holds' if report.lambda_bound['holds'] else 'exceeded'})")


def cmd_solve(args):
    cfg = config_from_args(args)
    try:
        report = solver.solve(cfg)
    except SolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    _print_summary(report)
    if cfg.out_dir:
        print(f"outputs     {cfg.out_dir}")
    return EXIT_OK


def cmd_check(args):
    mu = measures.parse_measure_file(args.measure, resolution=args.resolution, dim=args.dim)
    mu, _ = mu.normalize()
    rep = measures.check_hypothesis(mu, args.alpha, seed=args.seed)
    print(json.dumps(solver._jsonable(rep.as_dict()), indent=2))
    return EXIT_OK if rep.ok else solver.HypothesisViolation.exit_code


def _sweep_one(job):
    idx, base, params, out_root = job
    kw = dict(base)
    kw.update(params)
    if out_root:
        kw["out_dir"] = str(Path(out_root) / f"run_{idx:03d}")
    row = {"run": idx, **{a: kw.get(a) for a in SWEEP_AXES}}
    t0 = time.perf_counter()
    try:
        rep = solver.solve(SolveConfig(**kw))
        row.update(status=rep.status, exit_code=EXIT_OK, message="")
    except SolveError as exc:
        rep = exc.report if isinstance(exc.report, solver.SolveReport) else None
        row.update(status=type(exc).__name__, exit_code=exc.exit_code, message=str(exc))
    except ValueError as exc:
        rep = None
        row.update(status="invalid", exit_code=EXIT_INPUT, message=str(exc))
    if rep is not None:
        row.update({"lambda": rep.lambda_, "residual": rep.residual_final, "steps": rep.steps,
                    "t_final": rep.t_final})
    row["wall_time"] = time.perf_counter() - t0
    return row


def sweep_jobs(spec):
    """Expand a sweep description into ``(index, base, params, out)`` jobs."""
    base = dict(spec.get("base", {}))
    grid = spec.get("grid", {})
    unknown = set(grid) - set(SWEEP_AXES)
    if unknown:
        raise ValueError(f"sweep grid axes must be among {SWEEP_AXES}, got {sorted(unknown)}")
    axes = [a for a in SWEEP_AXES if a in grid]
    values = [list(grid[a]) for a in axes]
    out = spec.get("out")
    return [(i, base, dict(zip(axes, combo)), out)
            for i, combo in enumerate(itertools.product(*values))]


def run_sweep(spec, workers=None):
    jobs = sweep_jobs(spec)
    workers = workers or spec.get("workers") or 1
    log.info("sweep: %d runs on %d workers", len(jobs), workers)
    if workers == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    out = spec.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return rows


def cmd_sweep(args):
    spec = json.loads(Path(args.config).read_text())
    rows = run_sweep(spec, workers=args.workers)
    for r in rows:
        print(f"run {r['run']:3d}  alpha={r.get('alpha')}  k={r.get('mollify')}  "
              f"N={r.get('resolution')}  {r['status']}")
    codes = [r["exit_code"] for r in rows if r["exit_code"] != EXIT_OK]
    return max(codes) if codes else EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": cmd_solve, "check": cmd_check, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
