"""Manufactured problems, error metrics and refinement studies."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .diffusion import DiffusionProblem, SpatialGrid, solve_fast_esa, solve_l1
from .esa_kernel import VOFunction, gamma_eval, select_parameters
from .vo_caputo import (
    ESAHistory,
    TimeGrid,
    caputo_oracle,
    esa_history_advance,
    esa_history_term,
    history_scalars,
    l1_scale,
)

__all__ = [
    "ManufacturedProblem",
    "SeriesSolution",
    "ConvergenceRow",
    "ConvergenceTable",
    "example1",
    "example2",
    "sine_example",
    "zero_problem",
    "solve_ode",
    "max_error",
    "convergence_orders",
    "refinement_study",
    "markdown_table",
    "CSV_HEADER",
]

SCHEMES = ("l1", "fast")
CSV_HEADER = ["scheme", "alpha", "n", "m", "epsilon", "err", "order", "seconds", "aux_scalars", "n_eps"]


def _vec_gamma(x):
    x = np.asarray(x, dtype=float)
    return np.vectorize(gamma_eval, otypes=[float])(x) if x.ndim else gamma_eval(float(x))


@dataclass(frozen=True)
class ManufacturedProblem:
    """A problem with known solution.

    For ``kind == "ode"`` the spatial arguments are ignored and ``source``
    is the right-hand side of ``D^alpha u = source(t)``.  Callables take
    ``(x, t)`` (``source`` additionally ``alpha_t``); ``exact_dt`` is the
    time derivative used by the quadrature oracle.
    """

    name: str
    kind: str
    alpha: VOFunction
    exact: Callable
    exact_dt: Callable
    source: Callable
    initial: Callable
    exact_xx: Optional[Callable] = None
    horizon: float = 1.0
    x_right: float = 1.0

    def diffusion_problem(self, m: int, n: int) -> DiffusionProblem:
        if self.kind != "pde":
            raise ValueError(f"{self.name} has no spatial operator")
        return DiffusionProblem(SpatialGrid(self.x_right, m), TimeGrid(self.horizon, n),
                                self.alpha, self.source, self.initial)

    def residual(self, x: float, t: float) -> float:
        """Continuous-equation residual of the exact solution at ``(x, t)``."""
        a_t = float(self.alpha(t))
        lhs = caputo_oracle(lambda s: self.exact(x, s), lambda s: self.exact_dt(x, s), self.alpha, t)
        if self.kind == "pde":
            lhs -= self.exact_xx(x, t)
        return lhs - float(self.source(np.asarray(x, dtype=float), t, a_t))


def example1(alpha: VOFunction) -> ManufacturedProblem:
    """``D^alpha u = 2 t^(2-alpha) / Gamma(3-alpha)`` on [0, 1], exact ``u = t^2``."""

    def rhs(x, t, a_t):
        return 2.0 * t ** (2.0 - a_t) / _vec_gamma(3.0 - a_t)

    return ManufacturedProblem(
        name="example1", kind="ode", alpha=alpha,
        exact=lambda x, t: t**2, exact_dt=lambda x, t: 2.0 * t,
        source=rhs, initial=lambda x: 0.0,
    )


def example2(alpha: VOFunction) -> ManufacturedProblem:
    """Diffusion problem with exact solution ``10 x^2 (1-x) (t+1)^2`` on [0,1]^2."""

    def source(x, t, a_t):
        frac = t ** (2.0 - a_t) / gamma_eval(3.0 - a_t) + t ** (1.0 - a_t) / gamma_eval(2.0 - a_t)
        return 20.0 * x**2 * (1.0 - x) * frac - 20.0 * (t + 1.0) ** 2 * (1.0 - 3.0 * x)

    return ManufacturedProblem(
        name="example2", kind="pde", alpha=alpha,
        exact=lambda x, t: 10.0 * x**2 * (1.0 - x) * (t + 1.0) ** 2,
        exact_dt=lambda x, t: 20.0 * x**2 * (1.0 - x) * (t + 1.0),
        exact_xx=lambda x, t: 20.0 * (t + 1.0) ** 2 * (1.0 - 3.0 * x),
        source=source, initial=lambda x: 10.0 * x**2 * (1.0 - x),
    )


def sine_example(alpha: VOFunction) -> ManufacturedProblem:
    """Exact solution ``sin(pi x) (t+1)^2``; non-polynomial in x, so the
    second difference carries an O(dx^2) error."""
    pi2 = math.pi**2

    def source(x, t, a_t):
        frac = 2.0 * t ** (2.0 - a_t) / gamma_eval(3.0 - a_t) + 2.0 * t ** (1.0 - a_t) / gamma_eval(2.0 - a_t)
        return np.sin(math.pi * x) * (frac + pi2 * (t + 1.0) ** 2)

    return ManufacturedProblem(
        name="sine", kind="pde", alpha=alpha,
        exact=lambda x, t: np.sin(math.pi * x) * (t + 1.0) ** 2,
        exact_dt=lambda x, t: 2.0 * np.sin(math.pi * x) * (t + 1.0),
        exact_xx=lambda x, t: -pi2 * np.sin(math.pi * x) * (t + 1.0) ** 2,
        source=source, initial=lambda x: np.sin(math.pi * x),
    )


def zero_problem(alpha: VOFunction) -> ManufacturedProblem:
    return ManufacturedProblem(
        name="zero", kind="pde", alpha=alpha,
        exact=lambda x, t: 0.0 * x, exact_dt=lambda x, t: 0.0 * x,
        exact_xx=lambda x, t: 0.0 * x,
        source=lambda x, t, a_t: np.zeros_like(x), initial=lambda x: np.zeros_like(x),
    )


@dataclass
class SeriesSolution:
    """Time-marched solution of a scalar problem."""

    scheme: str
    t: np.ndarray
    values: np.ndarray
    seconds: float
    aux_scalars: int
    n_eps: int = 0

    @property
    def final(self) -> float:
        return float(self.values[-1])


def solve_ode(problem: ManufacturedProblem, n: int, scheme: str,
              epsilon: Optional[float] = None) -> SeriesSolution:
    """March ``D^alpha u = rhs`` with the L1 or fast derivative.

    Level k solves ``scale_k (u_k - u_{k-1}) + history_k = rhs_k`` for u_k.
    ``epsilon`` defaults to ``dt**2``.
    """
    if problem.kind != "ode":
        raise ValueError(f"{problem.name} is not a scalar problem")
    grid = TimeGrid(problem.horizon, n)
    restricted = problem.alpha.restrict(grid.horizon, n)
    a = restricted.on_grid(grid.horizon, n)
    t = grid.nodes
    rhs = np.array([0.0] + [float(problem.source(None, t[k], a[k])) for k in range(1, n + 1)])
    scale = np.array([0.0] + [l1_scale(x, grid.dt) for x in a[1:]])
    u0 = float(problem.initial(None))
    started = time.perf_counter()
    if scheme == "l1":
        du = _kernels.l1_march(rhs, 1.0 - a, scale)
        u = u0 + np.concatenate([[0.0], np.cumsum(du)])
        return SeriesSolution("l1", t, u, time.perf_counter() - started, history_scalars("l1", n))
    if scheme != "fast":
        raise ValueError(f"unknown scheme {scheme!r}")
    eps = grid.dt**2 if epsilon is None else epsilon
    params = select_parameters(eps, restricted, grid.horizon, grid.dt)
    u = np.empty(n + 1)
    u[0] = u0
    hist = ESAHistory.start(params)
    for k in range(1, n + 1):
        if k >= 2:
            hist = esa_history_advance(hist, u[k - 1], u[k - 2], params)
        u[k] = u[k - 1] + (rhs[k] - esa_history_term(hist, a[k], params, grid.horizon)) / scale[k]
    return SeriesSolution("fast", t, u, time.perf_counter() - started,
                          history_scalars("fast", n, params.n_eps), params.n_eps)


def max_error(solution, exact: Callable) -> float:
    """Sup-norm error at the final level (interior nodes for PDE solutions)."""
    if isinstance(solution, SeriesSolution):
        return abs(float(exact(None, solution.t[-1])) - solution.final)
    x = solution.x[1:-1]
    return float(np.max(np.abs(exact(x, solution.t[-1]) - solution.interior)))


def convergence_orders(errors: Sequence[Optional[float]]) -> list:
    """``log2(err_{r-1} / err_r)`` for each row; None where undefined."""
    out = [None]
    for prev, cur in zip(errors[:-1], errors[1:]):
        if prev is None or cur is None or prev <= 0 or cur <= 0:
            out.append(None)
        else:
            out.append(math.log2(prev / cur))
    return out


@dataclass
class ConvergenceRow:
    scheme: str
    alpha: str
    n: int
    m: int
    epsilon: Optional[float]
    err: Optional[float]
    order: Optional[float]
    seconds: Optional[float]
    aux_scalars: Optional[int]
    n_eps: int
    failed: str = ""

    def csv_fields(self, with_timing: bool = True):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return f"{v:.17g}"
            return str(v)
        values = [self.scheme, self.alpha, self.n, self.m, self.epsilon, self.err, self.order,
                  self.seconds if with_timing else None, self.aux_scalars, self.n_eps]
        return [fmt(v) for v in values]


@dataclass
class ConvergenceTable:
    problem: str
    rows: list = field(default_factory=list)

    def for_scheme(self, scheme: str) -> list:
        return [r for r in self.rows if r.scheme == scheme]

    def errors(self, scheme: str) -> list:
        return [r.err for r in self.for_scheme(scheme)]

    def orders(self, scheme: str) -> list:
        return [r.order for r in self.for_scheme(scheme)]

    def to_csv(self, with_timing: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow(row.csv_fields(with_timing))
        return buf.getvalue()

    def to_markdown(self) -> str:
        return markdown_table(self)


def _timed(fn, repeats: int):
    seconds = []
    result = None
    for _ in range(max(1, repeats)):
        started = time.perf_counter()
        result = fn()
        seconds.append(time.perf_counter() - started)
    return result, statistics.median(seconds)


def refinement_study(problem: ManufacturedProblem, scheme: str, schedule, repeats: int = 3) -> ConvergenceTable:
    """One row per ``(n, m, epsilon)`` entry; ``epsilon=None`` means ``dt**2``.

    ``scheme`` is ``"l1"``, ``"fast"`` or ``"both"``.  Failed solves are
    kept as flagged rows; orders are only formed between adjacent
    successful rows whose ``n`` doubles.  Seconds are the median of
    ``repeats`` runs.
    """
    schemes = SCHEMES if scheme == "both" else (scheme,)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    table = ConvergenceTable(problem.name)
    for s in schemes:
        rows = []
        for n, m, eps in schedule:
            n = int(n)
            m = int(m or 0)
            eps_used = (problem.horizon / n) ** 2 if eps is None else float(eps)
            try:
                if problem.kind == "ode":
                    sol, secs = _timed(lambda: solve_ode(problem, n, s, eps_used), repeats)
                else:
                    dp = problem.diffusion_problem(m, n)
                    run = (lambda: solve_l1(dp)) if s == "l1" else (lambda: solve_fast_esa(dp, eps_used))
                    sol, secs = _timed(run, repeats)
                err = max_error(sol, problem.exact)
                rows.append(ConvergenceRow(s, problem.alpha.name, n, m,
                                           eps_used if s == "fast" else None, err, None, secs,
                                           sol.aux_scalars, sol.n_eps))
            except (ValueError, RuntimeError, FloatingPointError) as exc:
                rows.append(ConvergenceRow(s, problem.alpha.name, n, m, eps_used, None, None,
                                           None, None, 0, failed=str(exc)))
        errs = [r.err for r in rows]
        orders = convergence_orders(errs)
        for r, (prev, row) in enumerate(zip([None] + rows[:-1], rows)):
            if prev is not None and row.n == 2 * prev.n and row.m == prev.m:
                row.order = orders[r]
        table.rows.extend(rows)
    return table


def markdown_table(table: ConvergenceTable) -> str:
    """Side-by-side L1 / fast layout, one line per (alpha, n, m)."""

    def fmt_err(v):
        return "-" if v is None else f"{v:.4e}"

    def fmt_order(v):
        return "-" if v is None else f"{v:.2f}"

    def fmt_sec(v):
        return "-" if v is None else f"{v:.2f}"

    def fmt_mem(v):
        return "-" if v is None else f"{v:.2e}"

    keys = []
    by_key = {}
    for row in table.rows:
        key = (row.alpha, row.n, row.m)
        if key not in by_key:
            keys.append(key)
            by_key[key] = {}
        by_key[key][row.scheme] = row
    lines = [
        "| alpha(t) | n | m | L1 Err | L1 Order_t | L1 CPU(s) | L1 Memory "
        "| Fast Err | Fast Order_t | Fast CPU(s) | Fast Memory | N_eps |",
        "|---|---|---|---|---|---|---|---|---|---|---|---|",
    ]
    for key in keys:
        cells = [key[0], str(key[1]), str(key[2])]
        for s in SCHEMES:
            row = by_key[key].get(s)
            if row is None:
                cells += ["", "", "", ""]
            else:
                cells += [fmt_err(row.err), fmt_order(row.order), fmt_sec(row.seconds),
                          fmt_mem(None if row.aux_scalars is None else float(row.aux_scalars))]
        fast = by_key[key].get("fast")
        cells.append(str(fast.n_eps) if fast else "")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
