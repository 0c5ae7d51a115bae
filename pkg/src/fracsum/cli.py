"""Command-line driver: ``fracsum {kernel-check,derivative-bench,solve}``.

Exit status: 0 success, 1 accuracy/order check failed, 2 invalid input.
Every failure prints a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from .diffusion import Solution, solve_fast_esa, solve_l1, write_solution_csv
from .esa_kernel import VOFunction, custom_linear, custom_sine, kernel_relative_error, linear, select_parameters, sin5
from .verification import (
    example1,
    example2,
    max_error,
    refinement_study,
    sine_example,
    zero_problem,
)

PRESETS = ("sin5", "linear", "custom")
PROBLEMS = {"example2": example2, "sine": sine_example, "zero": zero_problem}


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def parse_n(text: str) -> list:
    """``"1000"`` -> [1000]; ``"1000:8000"`` -> [1000, 2000, 4000, 8000]."""
    parts = text.split(":")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise InputError(f"bad --n value {text!r}")
    if len(values) == 1:
        lo = hi = values[0]
    elif len(values) == 2:
        lo, hi = values
    else:
        raise InputError(f"bad --n value {text!r}")
    if lo < 1 or hi < lo:
        raise InputError(f"--n range must satisfy 1 <= start <= stop, got {text!r}")
    out = [lo]
    while out[-1] * 2 <= hi:
        out.append(out[-1] * 2)
    if out[-1] != hi:
        raise InputError(f"--n stop {hi} is not start times a power of two")
    return out


def parse_eps(text: str, dt: float) -> float:
    if text == "dt2":
        eps = dt * dt
    else:
        try:
            eps = float(text)
        except ValueError:
            raise InputError(f"bad --eps value {text!r} (use 'dt2' or a number)")
    if not 0.0 < eps <= 1.0 / math.e:
        raise InputError(f"epsilon must lie in (0, 1/e], got {eps:g}")
    return eps


def build_alpha(name: str, coeffs) -> VOFunction:
    if name == "sin5":
        return sin5()
    if name == "linear":
        return linear()
    if not coeffs:
        raise InputError("--alpha custom needs --coeffs a,b (a-b*t) or a,b,c ((a+sin(b*t))/c)")
    try:
        values = [float(c) for c in coeffs.split(",")]
    except ValueError:
        raise InputError(f"bad --coeffs {coeffs!r}")
    if len(values) == 2:
        return custom_linear(*values)
    if len(values) == 3:
        return custom_sine(*values)
    raise InputError("--coeffs takes 2 (linear) or 3 (sine) numbers")


def _checked_alpha(args, n: int) -> VOFunction:
    alpha = build_alpha(args.alpha, args.coeffs)
    return alpha.restrict(args.T, n)  # raises if the order leaves (0, 1) on the grid


def _thread_limit():
    raw = os.environ.get("FRACSUM_THREADS")
    if raw is None or raw == "":
        return nullcontext()
    try:
        value = int(raw)
    except ValueError:
        raise InputError(f"FRACSUM_THREADS must be a non-negative integer, got {raw!r}")
    if value < 0:
        raise InputError(f"FRACSUM_THREADS must be a non-negative integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(value, 1))


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_kernel_check(args) -> int:
    n = parse_n(args.n)
    if len(n) != 1:
        raise InputError("kernel-check takes a single --n")
    n = n[0]
    dt = args.T / n
    eps = parse_eps(args.eps, dt)
    alpha = _checked_alpha(args, n)
    params = select_parameters(eps, alpha, args.T, dt)
    orders = np.linspace(alpha.alpha_min, alpha.alpha_max, args.samples)
    s = np.geomspace(params.delta, 1.0, args.points)
    rows = []
    for a_k in orders:
        for s_j, err in zip(s, kernel_relative_error(params, float(a_k), s)):
            rows.append((float(a_k), float(s_j), float(err)))
    worst = max(r[2] for r in rows)
    if args.format == "md":
        lines = ["| alpha | s | rel_err |", "|---|---|---|"]
        lines += [f"| {a:.6g} | {s_:.6e} | {e:.3e} |" for a, s_, e in rows]
        text = "\n".join(lines) + "\n"
    else:
        text = "alpha,s,rel_err\n" + "".join(f"{a:.17g},{s_:.17g},{e:.17g}\n" for a, s_, e in rows)
    _emit(text, args.out)
    ok = worst <= eps
    print(f"max_rel_err={worst:.3e} epsilon={eps:.3e} n_eps={params.n_eps} rows={len(rows)} "
          f"{'ok' if ok else 'FAIL'}", file=sys.stderr if args.out is None else sys.stdout)
    if not ok:
        print(f"error: kernel relative error {worst:.3e} exceeds epsilon {eps:.3e}", file=sys.stderr)
        return 1
    return 0


def _schedule(ns, eps_text, horizon, m=0):
    out = []
    for n in ns:
        eps = parse_eps(eps_text, horizon / n)
        out.append((n, m, None if eps_text == "dt2" else eps))
    return out


def cmd_derivative_bench(args) -> int:
    ns = parse_n(args.n)
    alpha = build_alpha(args.alpha, args.coeffs)
    restricted = alpha.restrict(args.T, ns[-1])
    schedule = _schedule(ns, args.eps, args.T)
    lo = 2.0 - restricted.alpha_max - 0.15 if args.order_min is None else args.order_min
    hi = 2.0 - restricted.alpha_min + 0.15 if args.order_max is None else args.order_max
    problem = replace(example1(alpha), horizon=args.T)
    table = refinement_study(problem, args.scheme, schedule, repeats=args.repeats)
    _emit(table.to_markdown() if args.format == "md" else table.to_csv(), args.out)
    failed = [r for r in table.rows if r.failed]
    bad = [r for r in table.rows if r.order is not None and not lo <= r.order <= hi]
    for r in failed:
        print(f"error: {r.scheme} n={r.n} failed: {r.failed}", file=sys.stderr)
    if bad:
        r = bad[0]
        print(f"error: {r.scheme} n={r.n} order {r.order:.3f} outside [{lo:.3f}, {hi:.3f}]", file=sys.stderr)
    return 1 if failed or bad else 0


def _solve_one(problem, scheme, m, n, eps, snapshots) -> Solution:
    dp = problem.diffusion_problem(m, n)
    if scheme == "l1":
        return solve_l1(dp, store_every=snapshots)
    return solve_fast_esa(dp, eps, store_every=snapshots)


def _with_suffix(out: Path, tag: str) -> Path:
    return out.with_name(f"{out.stem}_{tag}{out.suffix or '.csv'}")


def cmd_solve(args) -> int:
    ns = parse_n(args.n)
    if len(ns) != 1:
        raise InputError("solve takes a single --n")
    n = ns[0]
    if args.m < 2:
        raise InputError("--m must be at least 2")
    if args.format != "csv":
        raise InputError("solve writes CSV only")
    eps = parse_eps(args.eps, args.T / n)
    alpha = build_alpha(args.alpha, args.coeffs)
    alpha.restrict(args.T, n)
    if args.snapshots < 0:
        raise InputError("--snapshots must be non-negative")
    if args.problem != "zero" and args.xr != 1.0:
        raise InputError(f"{args.problem} vanishes at the boundary only for --xr 1")
    problem = replace(PROBLEMS[args.problem](alpha), horizon=args.T, x_right=args.xr)
    out = Path(args.out or "solution.csv")
    schemes = ("l1", "fast") if args.scheme == "both" else (args.scheme,)
    solutions = {}
    for scheme in schemes:
        sol = _solve_one(problem, scheme, args.m, n, eps, args.snapshots)
        path = out if len(schemes) == 1 else _with_suffix(out, scheme)
        write_solution_csv(path, sol)
        solutions[scheme] = sol
        err = max_error(sol, problem.exact)
        print(f"scheme={scheme} n={n} m={args.m} epsilon={eps:.3e} err={err:.4e} "
              f"n_eps={sol.n_eps} seconds={sol.seconds:.3f} aux_scalars={sol.aux_scalars} out={path}")
    if len(solutions) == 2:
        diff = float(np.max(np.abs(solutions["l1"].final - solutions["fast"].final)))
        print(f"max_abs_diff={diff:.4e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracsum", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--alpha", choices=PRESETS, default="sin5",
                        help="order preset: sin5 (2+sin5t)/4, linear 1-0.8t, or custom")
    common.add_argument("--coeffs", help="custom order: a,b for a-b*t or a,b,c for (a+sin(b*t))/c")
    common.add_argument("--T", type=_positive_float, default=1.0, help="final time")
    common.add_argument("--eps", default="dt2", help="kernel accuracy: 'dt2' or a number")
    common.add_argument("--out", help="output path (stdout if omitted, where allowed)")
    common.add_argument("--format", choices=("csv", "md"), default="csv")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kc = sub.add_parser("kernel-check", parents=[common], help="sweep the compressed kernel's relative error")
    kc.add_argument("--n", default="10000", help="number of steps; dt = T/n")
    kc.add_argument("--samples", type=_positive_int, default=9, help="number of sampled orders")
    kc.add_argument("--points", type=_positive_int, default=50, help="log-spaced s points in [dt/T, 1]")
    kc.set_defaults(func=cmd_kernel_check)

    db = sub.add_parser("derivative-bench", parents=[common], help="refinement study on the scalar test problem")
    db.add_argument("--n", default="10000:40000", help="N or START:STOP doubling range")
    db.add_argument("--scheme", choices=("l1", "fast", "both"), default="both")
    db.add_argument("--repeats", type=_positive_int, default=3, help="timing repeats (median)")
    db.add_argument("--order-min", type=float, help="lower end of the accepted order band")
    db.add_argument("--order-max", type=float, help="upper end of the accepted order band")
    db.set_defaults(func=cmd_derivative_bench)

    sv = sub.add_parser("solve", parents=[common], help="solve the diffusion problem, write x,t,u CSV")
    sv.add_argument("--n", default="1000", help="number of time steps")
    sv.add_argument("--m", type=int, default=100, help="number of spatial intervals")
    sv.add_argument("--xr", type=_positive_float, default=1.0, help="right end of the domain")
    sv.add_argument("--scheme", choices=("l1", "fast", "both"), default="fast")
    sv.add_argument("--problem", choices=tuple(PROBLEMS), default="example2")
    sv.add_argument("--snapshots", type=int, default=0, help="store every K-th level (0: final only)")
    sv.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
