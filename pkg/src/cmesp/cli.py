"""Command-line front end.

Examples::

    cmesp bound --matrix c.txt --s 3 --bounds ddfact,linx
    cmesp sweep --matrix c.txt --s-range 2:9 --bounds ddfact,comp,linx --gamma opt
    cmesp mix --matrix c.txt --s 5 --pair ddfact,linx
    cmesp fix --matrix c.txt --s 4 --bounds ddfact,linx
    cmesp exact --matrix c.txt --s 2
    cmesp gen spd --n 10 --seed 1 --out c.txt

Exit status is 0 on success, 1 on a numerical failure and 2 on usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ._frankwolfe import SolverOptions
from .exact import (
    BoundConfig,
    brute_force,
    branch_and_bound,
    evaluate_bound,
    heuristic_lb,
    iterative_fix,
    parse_bound,
)
from .instance import (
    Instance,
    InstanceError,
    generate_cmesp_constraints,
    load_constraints,
    load_matrix,
    random_spd,
    write_constraints,
    write_matrix,
)
from .polytope import InfeasibleError, LPError

log = logging.getLogger("cmesp")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

BOUND_COLUMNS = ["instance", "n", "s", "bound", "gamma", "ub", "lb", "gap", "fixed0", "fixed1", "seconds"]
MIX_COLUMNS = ["instance", "n", "s", "bound", "gamma", "alpha", "ub", "lb", "gap", "fixed0", "fixed1", "seconds"]
FIX_COLUMNS = ["instance", "round", "n", "s", "lb", "ub", "fixed0", "fixed1", "status"]
EXACT_COLUMNS = ["instance", "n", "s", "method", "z", "support", "count", "seconds"]


class UsageError(Exception):
    """Bad arguments or unreadable input (exit status 2)."""


def fmt(v) -> str:
    """Numbers with 12 significant digits; everything else as text."""
    if isinstance(v, (float, np.floating)):
        return "%.12g" % v
    return str(v)


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def parse_s_values(args, n: int) -> list:
    if args.s is not None and args.s_range is not None:
        raise UsageError("give either --s or --s-range, not both")
    if args.s is not None:
        vals = [args.s]
    elif args.s_range is not None:
        try:
            lo, hi = (int(p) for p in args.s_range.split(":"))
        except ValueError:
            raise UsageError(f"--s-range must look like a:b, got {args.s_range!r}") from None
        vals = list(range(lo, hi + 1))
    else:
        raise UsageError("one of --s or --s-range is required")
    bad = [s for s in vals if not 0 < s < n]
    if bad or not vals:
        raise UsageError(f"s values must lie in (0, {n}), got {bad or vals}")
    return vals


def parse_gamma(text):
    if text is None or text == "opt":
        return None if text == "opt" else 1.0
    try:
        g = float(text)
    except ValueError:
        raise UsageError(f"--gamma must be a positive number or 'opt', got {text!r}") from None
    if not g > 0:
        raise UsageError("--gamma must be positive")
    return g


def parse_bounds(text: str, gamma) -> list:
    items = [t for t in (text or "").split(",") if t.strip()]
    if not items:
        raise UsageError("--bounds must name at least one bound")
    try:
        return [parse_bound(t, gamma) for t in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_problem(args):
    """``(C, side, label)`` from ``--matrix`` / ``--constraints``."""
    if not args.matrix:
        raise UsageError("--matrix is required")
    path = Path(args.matrix)
    if not path.is_file():
        raise UsageError(f"matrix file not found: {path}")
    try:
        C = load_matrix(path)
        side = None
        if getattr(args, "constraints", None):
            cpath = Path(args.constraints)
            if not cpath.is_file():
                raise UsageError(f"constraints file not found: {cpath}")
            side = load_constraints(cpath, C.shape[0])
        # validate once (symmetry, PSD) before any work
        Instance(C, 1 if C.shape[0] > 1 else 0, side, path.stem)
    except InstanceError as exc:
        raise UsageError(str(exc)) from None
    return C, side, path.stem


def solver_options(args) -> SolverOptions:
    opts = SolverOptions()
    if getattr(args, "tol", None) is not None:
        opts.tol = args.tol
    if getattr(args, "max_iter", None) is not None:
        opts.max_iter = args.max_iter
    return opts


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def emit(rows, columns, args) -> None:
    out = io.StringIO()
    if args.format == "text":
        table = [columns] + [[fmt(r[c]) for c in columns] for r in rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(columns))]
        for row in table:
            out.write("  ".join(v.rjust(w) for v, w in zip(row, widths)) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])
    text = out.getvalue()
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from None
    else:
        sys.stdout.write(text)


def _seconds(t0, args) -> float:
    return 0.0 if args.no_timing else time.perf_counter() - t0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _bound_rows(task):
    """All bound rows for one ``s`` (runs in a worker process under --jobs)."""
    C, side, label, s, cfgs, opts, eps, no_timing = task
    inst = Instance(C, s, side, label)
    lb = heuristic_lb(inst).z
    rows = []
    for cfg in cfgs:
        if eps:
            cfg = BoundConfig(cfg.kind, cfg.gamma, cfg.pair, cfg.alpha, eps)
        t0 = time.perf_counter()
        out = evaluate_bound(inst, cfg, opts)
        rep = out.fix(lb)
        rows.append(
            {
                "instance": label,
                "n": inst.n,
                "s": s,
                "bound": cfg.name,
                "gamma": out.gamma if math.isfinite(out.gamma) else "",
                "alpha": out.alpha if math.isfinite(out.alpha) else "",
                "ub": out.value,
                "lb": lb,
                "gap": out.value - lb,
                "fixed0": len(rep.fixed_zero),
                "fixed1": len(rep.fixed_one),
                "seconds": 0.0 if no_timing else time.perf_counter() - t0,
            }
        )
    return rows


def _run_per_s(args, cfgs):
    C, side, label = load_problem(args)
    svals = parse_s_values(args, C.shape[0])
    opts = solver_options(args)
    tasks = [(C, side, label, s, cfgs, opts, args.eps, args.no_timing) for s in svals]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            parts = list(pool.map(_bound_rows, tasks))
    else:
        parts = [_bound_rows(t) for t in tasks]
    return [row for part in parts for row in part]


def cmd_bound(args) -> int:
    cfgs = parse_bounds(args.bounds, parse_gamma(args.gamma))
    emit(_run_per_s(args, cfgs), BOUND_COLUMNS, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.s_range is None:
        raise UsageError("sweep needs --s-range")
    return cmd_bound(args)


def cmd_mix(args) -> int:
    pair = tuple(p.strip() for p in args.pair.split(","))
    if len(pair) != 2:
        raise UsageError("--pair must name two bounds, e.g. ddfact,linx")
    try:
        cfg = parse_bound("mix:" + "+".join(pair), parse_gamma(args.gamma))
        if args.alpha is not None:
            cfg = BoundConfig("mix", cfg.gamma, cfg.pair, args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    emit(_run_per_s(args, [cfg]), MIX_COLUMNS, args)
    return EXIT_OK


def cmd_fix(args) -> int:
    cfgs = parse_bounds(args.bounds, parse_gamma(args.gamma))
    C, side, label = load_problem(args)
    opts = solver_options(args)
    rows = []
    for s in parse_s_values(args, C.shape[0]):
        inst = Instance(C, s, side, label)
        res = iterative_fix(inst, cfgs, args.max_rounds, opts)
        for rec in res.rounds:
            rows.append(
                {
                    "instance": label,
                    "round": rec.round,
                    "n": rec.n,
                    "s": rec.s,
                    "lb": rec.lb,
                    "ub": rec.ub,
                    "fixed0": rec.fixed_zero,
                    "fixed1": rec.fixed_one,
                    "status": res.status,
                }
            )
    emit(rows, FIX_COLUMNS, args)
    return EXIT_OK


def _support_text(x) -> str:
    # 1-based indices, matching the usual mathematical convention
    return " ".join(str(int(j) + 1) for j in np.flatnonzero(np.asarray(x) > 0.5))


def cmd_exact(args) -> int:
    C, side, label = load_problem(args)
    rows = []
    for s in parse_s_values(args, C.shape[0]):
        inst = Instance(C, s, side, label)
        t0 = time.perf_counter()
        if args.method == "brute":
            res = brute_force(inst)
        else:
            res = branch_and_bound(inst, parse_bound(args.bound), args.budget, solver_options(args))
        rows.append(
            {
                "instance": label,
                "n": inst.n,
                "s": s,
                "method": args.method,
                "z": res.z,
                "support": _support_text(res.x),
                "count": res.count,
                "seconds": _seconds(t0, args),
            }
        )
    emit(rows, EXACT_COLUMNS, args)
    return EXIT_OK


def cmd_heuristic(args) -> int:
    C, side, label = load_problem(args)
    rows = []
    for s in parse_s_values(args, C.shape[0]):
        inst = Instance(C, s, side, label)
        t0 = time.perf_counter()
        res = heuristic_lb(inst)
        rows.append(
            {
                "instance": label,
                "n": inst.n,
                "s": s,
                "method": "heuristic",
                "z": res.z,
                "support": _support_text(res.x),
                "count": res.count,
                "seconds": _seconds(t0, args),
            }
        )
    emit(rows, EXACT_COLUMNS, args)
    return EXIT_OK


def cmd_gen(args) -> int:
    if not args.out:
        raise UsageError("gen needs --out")
    if args.what == "spd":
        if args.n is None or args.n < 2:
            raise UsageError("gen spd needs --n >= 2")
        write_matrix(args.out, random_spd(args.n, args.seed, rank=args.rank))
        return EXIT_OK
    C, _, label = load_problem(args)
    n = C.shape[0]
    given = args.s is not None or args.s_range is not None
    svals = parse_s_values(args, n) if given else list(range(1, n))
    best = {}
    for s in svals:
        inst = Instance(C, s, None, label)
        res = brute_force(inst) if math.comb(n, s) <= 10**6 else heuristic_lb(inst)
        best[s] = res.x
    side = generate_cmesp_constraints(Instance(C, svals[0], None, label), args.m, args.seed, best)
    write_constraints(args.out, side)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p, bounds=True):
    p.add_argument("--matrix", help="dense matrix file: order n, then n*n numbers")
    p.add_argument("--constraints", help="side constraints file: m, then m rows 'a_1 ... a_n b'")
    p.add_argument("--s", type=int, help="cardinality")
    p.add_argument("--s-range", help="inclusive cardinality range a:b")
    if bounds:
        p.add_argument("--bounds", default="ddfact", help="comma list of ddfact, comp, linx, linx@opt, mix:a+b")
        p.add_argument("--gamma", default=None, help="linx scale: a positive number or 'opt' (default 1)")
        p.add_argument("--eps", type=float, default=0.0, help="dual construction parameter (default 0)")
    p.add_argument("--tol", type=float, help="Frank-Wolfe gap tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, help="Frank-Wolfe iteration limit (default 5000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write output here instead of standard output")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across s values")
    p.add_argument("--no-timing", action="store_true", help="report 0 seconds (bit-stable output)")
    p.add_argument("--format", choices=("csv", "text"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmesp", description="Bounds and exact solutions for constrained MESP.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="certified upper bounds")
    _common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="bounds over an s range")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mix", help="optimally weighted pair of bounds")
    _common(p, bounds=False)
    p.add_argument("--pair", default="ddfact,linx")
    p.add_argument("--gamma", default=None)
    p.add_argument("--alpha", type=float, help="fixed weight on the second bound (default: optimize)")
    p.add_argument("--eps", type=float, default=0.0)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("fix", help="iterated variable fixing")
    _common(p)
    p.add_argument("--max-rounds", type=int, default=10)
    p.set_defaults(func=cmd_fix)

    p = sub.add_parser("exact", help="exact optimum by enumeration or branch and bound")
    _common(p, bounds=False)
    p.add_argument("--method", choices=("brute", "bnb"), default="brute")
    p.add_argument("--bound", default="ddfact", help="node bound for --method bnb")
    p.add_argument("--budget", type=int, default=10000, help="node limit for --method bnb")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("heuristic", help="greedy + interchange lower bound")
    _common(p, bounds=False)
    p.set_defaults(func=cmd_heuristic)

    p = sub.add_parser("gen", help="generate a random matrix or side constraints")
    p.add_argument("what", choices=("spd", "constraints"))
    _common(p, bounds=False)
    p.add_argument("--n", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cmesp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, LPError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError, InstanceError) as exc:
        print(f"cmesp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
