"""Solvers for the 1D variable-order time-fractional diffusion problem

    D_t^{alpha(t)} u = u_xx + f(x, t)   on (0, x_R) x (0, T],
    u(x, 0) = phi(x),  u(0, t) = u(x_R, t) = 0.

Every time level reduces to one constant-coefficient tridiagonal system
``-u_{j+1} + (2 + s_k) u_j - u_{j-1} = rhs_j`` with
``s_k = dx^2 dt^(-alpha_k) / Gamma(2 - alpha_k)``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .esa_kernel import ESAParams, VOFunction, gamma_eval, kernel_weights, select_parameters
from .vo_caputo import TimeGrid, l1_scale

__all__ = [
    "SpatialGrid",
    "DiffusionProblem",
    "SchemeCoefficients",
    "Solution",
    "StabilityReport",
    "tridiagonal_solve",
    "solve_l1",
    "solve_fast_esa",
    "solve_by_coefficients",
    "scheme_coefficients",
    "stability_check",
    "write_solution_csv",
]


@dataclass(frozen=True)
class SpatialGrid:
    x_right: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need m >= 2 spatial intervals")
        if not self.x_right > 0:
            raise ValueError("x_right must be positive")

    @property
    def dx(self) -> float:
        return self.x_right / self.m

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.dx

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]


@dataclass(frozen=True)
class DiffusionProblem:
    """Homogeneous Dirichlet problem; ``source(x, t, alpha_t)`` and ``initial(x)`` are vectorized in x."""

    spatial: SpatialGrid
    time: TimeGrid
    alpha: VOFunction
    source: Callable[[np.ndarray, float, float], np.ndarray]
    initial: Callable[[np.ndarray], np.ndarray]

    def alpha_values(self) -> np.ndarray:
        return self.alpha.on_grid(self.time.horizon, self.time.n)

    def restricted_alpha(self) -> VOFunction:
        return self.alpha.restrict(self.time.horizon, self.time.n)

    def source_at(self, k: int, alpha_k: float) -> np.ndarray:
        # k * dt equals nodes[k] bitwise without building the whole grid each level
        return np.asarray(self.source(self.spatial.interior, k * self.time.dt, alpha_k), dtype=float)

    def initial_values(self) -> np.ndarray:
        return np.asarray(self.initial(self.spatial.interior), dtype=float)


@dataclass
class Solution:
    """Result of a solve.

    ``final`` holds all ``m + 1`` nodes (boundary entries are zero).
    ``norms[k]`` is the sup norm of level ``k``.  ``aux_scalars`` counts the
    auxiliary scalars held live by the time stepper (history bank or stored
    levels plus the working vectors).
    """

    scheme: str
    x: np.ndarray
    t: np.ndarray
    final: np.ndarray
    norms: np.ndarray
    seconds: float
    aux_scalars: int
    n_eps: int = 0
    params: Optional[ESAParams] = None
    snapshots: dict = field(default_factory=dict)

    @property
    def interior(self) -> np.ndarray:
        return self.final[1:-1]


def tridiagonal_solve(sub, diag, sup, rhs) -> np.ndarray:
    """Solve a tridiagonal system by forward elimination and back substitution.

    ``sub`` and ``sup`` have one entry fewer than ``diag``.  Strict
    diagonal dominance is required.
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    sup = np.asarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    m = diag.shape[0]
    if m == 0 or sub.shape != (m - 1,) or sup.shape != (m - 1,) or rhs.shape != (m,):
        raise ValueError("inconsistent tridiagonal system shapes")
    off = np.zeros(m)
    off[1:] += np.abs(sub)
    off[:-1] += np.abs(sup)
    if np.any(np.abs(diag) <= off):
        raise ValueError("system is not strictly diagonally dominant")
    return _kernels.thomas(sub, diag, sup, rhs)


def _step_solver(m_interior: int):
    ones = -np.ones(m_interior - 1)
    diag = np.empty(m_interior)

    def solve(s_k, rhs):
        diag.fill(2.0 + s_k)
        return _kernels.thomas(ones, diag, ones, rhs)

    return solve


def _pad(interior: np.ndarray) -> np.ndarray:
    out = np.zeros(interior.shape[0] + 2)
    out[1:-1] = interior
    return out


def _keep_snapshot(every: int, k: int, n: int) -> bool:
    return every > 0 and (k % every == 0 or k == n)


def solve_l1(problem: DiffusionProblem, store_every: int = 0) -> Solution:
    """L1 scheme; keeps every past level (O(m n) storage, O(m n^2) work)."""
    started = time.perf_counter()
    sg, tg = problem.spatial, problem.time
    a = problem.alpha_values()
    dx2 = sg.dx**2
    mi = sg.m - 1
    u0 = problem.initial_values()
    diffs = np.zeros((tg.n, mi))
    solve = _step_solver(mi)
    norms = np.zeros(tg.n + 1)
    norms[0] = np.abs(u0).max() if mi else 0.0
    snapshots = {0: _pad(u0)} if store_every > 0 else {}
    logj = np.log(np.arange(1, tg.n + 1, dtype=float))
    u = u0
    for k in range(1, tg.n + 1):
        scale = l1_scale(a[k], tg.dt)
        s_k = dx2 * scale
        if k >= 2:
            powers = np.exp((1.0 - a[k]) * logj[:k])
            w = np.diff(powers)  # w_j for j = 2..k
            hist = np.ascontiguousarray(w[::-1]) @ diffs[:k - 1]  # strided operands skip BLAS
        else:
            hist = 0.0
        rhs = s_k * (u - hist) + dx2 * problem.source_at(k, a[k])
        new = solve(s_k, rhs)
        diffs[k - 1] = new - u
        u = new
        norms[k] = np.abs(u).max()
        if _keep_snapshot(store_every, k, tg.n):
            snapshots[k] = _pad(u)
    return Solution("l1", sg.nodes, tg.nodes, _pad(u), norms,
                    time.perf_counter() - started, aux_scalars=(tg.n + 2) * mi,
                    snapshots=snapshots)


def solve_fast_esa(problem: DiffusionProblem, epsilon: float, store_every: int = 0) -> Solution:
    """Fast ESA scheme; one bank of ``N_eps`` moments per interior node.

    Work O(m n N_eps), auxiliary storage ``(m-1) N_eps + 3 (m-1)`` scalars:
    the bank plus ``u^{k-1}``, ``u^{k-2}`` and the right-hand side.
    """
    started = time.perf_counter()
    sg, tg = problem.spatial, problem.time
    a = problem.alpha_values()
    params = select_parameters(epsilon, problem.restricted_alpha(), tg.horizon, tg.dt)
    dx2 = sg.dx**2
    mi = sg.m - 1
    bank = np.zeros((mi, params.n_eps))  # node-major
    solve = _step_solver(mi)
    u_prev = problem.initial_values()
    u_prev2 = None
    norms = np.zeros(tg.n + 1)
    norms[0] = np.abs(u_prev).max()
    snapshots = {0: _pad(u_prev)} if store_every > 0 else {}
    for k in range(1, tg.n + 1):
        scale = l1_scale(a[k], tg.dt)
        s_k = dx2 * scale
        rhs = s_k * u_prev + dx2 * problem.source_at(k, a[k])
        if k >= 2:
            theta = kernel_weights(params, a[k])
            coeff = tg.horizon ** (-a[k]) / gamma_eval(1.0 - a[k])
            hist = _kernels.esa_bank_step(bank, params.decay, params.increment, u_prev - u_prev2, theta)
            rhs -= dx2 * coeff * hist
        u = solve(s_k, rhs)
        u_prev2, u_prev = u_prev, u
        norms[k] = np.abs(u).max()
        if _keep_snapshot(store_every, k, tg.n):
            snapshots[k] = _pad(u)
    return Solution("fast", sg.nodes, tg.nodes, _pad(u_prev), norms,
                    time.perf_counter() - started,
                    aux_scalars=mi * params.n_eps + 3 * mi,
                    n_eps=params.n_eps, params=params, snapshots=snapshots)


@dataclass(frozen=True)
class SchemeCoefficients:
    level: int
    b: np.ndarray
    eps_k: float
    s_k: float


def _segment_integrals(params: ESAParams, k: int, dt: float) -> np.ndarray:
    # rows l = 0..k-2: int_{t_l}^{t_{l+1}} exp(-lambda_i (t_k - tau)/T) dtau
    lam = params.exponents
    horizon = params.horizon
    x = lam * params.delta
    gap = np.arange(k - 1, 0, -1, dtype=float)[:, None]  # k - l - 1
    return (horizon / lam) * np.exp(-gap * x) * -np.expm1(-x)


def scheme_coefficients(params: ESAParams, alpha: VOFunction, k: int, grid: TimeGrid,
                        dx: float = 1.0) -> SchemeCoefficients:
    """Coefficients ``b_l^k`` (l = 0..k-1) and ``eps_k`` of the fast scheme.

    O(k N_eps); for analysis and tests only.
    """
    if not 1 <= k <= grid.n:
        raise ValueError(f"level {k} outside 1..{grid.n}")
    a_k = float(alpha(grid.nodes[k]))
    s_k = dx**2 * l1_scale(a_k, grid.dt)
    if k == 1:
        return SchemeCoefficients(1, np.array([1.0]), 0.0, s_k)
    theta = kernel_weights(params, a_k)
    c = grid.horizon ** (-a_k) * grid.dt ** (a_k - 1.0) * (1.0 - a_k)
    seg = c * (_segment_integrals(params, k, grid.dt) @ theta)  # S_l, l = 0..k-2
    b = np.empty(k)
    b[0] = seg[0]
    b[1:k - 1] = seg[1:] - seg[:-1]
    b[k - 1] = 1.0 - seg[-1]
    eps_k = params.epsilon / (1.0 + params.epsilon) * seg[-1]
    return SchemeCoefficients(k, b, float(eps_k), s_k)


def solve_by_coefficients(problem: DiffusionProblem, epsilon: float) -> np.ndarray:
    """Fast scheme assembled directly from ``b_l^k``; returns all levels (n+1, m+1).

    Quadratic in n; used to cross-check :func:`solve_fast_esa`.
    """
    sg, tg = problem.spatial, problem.time
    restricted = problem.restricted_alpha()
    a = restricted.on_grid(tg.horizon, tg.n)
    params = select_parameters(epsilon, restricted, tg.horizon, tg.dt)
    mi = sg.m - 1
    levels = np.zeros((tg.n + 1, mi))
    levels[0] = problem.initial_values()
    solve = _step_solver(mi)
    for k in range(1, tg.n + 1):
        co = scheme_coefficients(params, restricted, k, tg, sg.dx)
        rhs = co.s_k * (co.b @ levels[:k]) + sg.dx**2 * problem.source_at(k, a[k])
        levels[k] = solve(co.s_k, rhs)
    out = np.zeros((tg.n + 1, sg.m + 1))
    out[:, 1:-1] = levels
    return out


@dataclass(frozen=True)
class StabilityReport:
    c_f: float
    c_gamma: float
    bound: float
    max_norm: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.slack >= 0.0


def stability_check(problem: DiffusionProblem, solution: Solution, epsilon: float) -> StabilityReport:
    """Compare ``max_k ||u^k||`` with ``e^T ||u^0|| + c_f c_g e^T T^amax / (1 - eps)``."""
    tg = problem.time
    a = problem.alpha_values()
    c_f = max(float(np.abs(problem.source_at(k, a[k])).max()) for k in range(1, tg.n + 1))
    c_gamma = max(gamma_eval(1.0 - x) for x in a[1:])
    amax = float(a[1:].max())
    e_t = math.exp(tg.horizon)
    u0 = float(np.abs(problem.initial_values()).max())
    bound = e_t * u0 + c_f * c_gamma * e_t / (1.0 - epsilon) * tg.horizon**amax
    max_norm = float(solution.norms[1:].max())
    return StabilityReport(c_f, c_gamma, bound, max_norm, bound - max_norm)


def write_solution_csv(path, solution: Solution) -> None:
    """Write ``x,t,u`` rows: every stored snapshot, else the final level."""
    levels = solution.snapshots or {len(solution.t) - 1: solution.final}
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "t", "u"])
        for k in sorted(levels):
            tk = solution.t[k]
            for xj, uj in zip(solution.x, levels[k]):
                writer.writerow([f"{xj:.17g}", f"{tk:.17g}", f"{uj:.17g}"])
