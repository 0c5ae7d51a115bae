"""Variable-order Caputo derivatives of sampled time series.

Two discretizations of the same piecewise-linear (L1) approximation:

* :func:`l1_derivative` sums the full history, Theta(n^2) work.
* :func:`fast_derivative_series` replaces the history integral by an
  exponential sum whose moments are advanced by a two-term recursion,
  O(n N_eps) work and O(N_eps) history storage.

:func:`caputo_oracle` evaluates the continuous definition by quadrature and
is used as the independent reference in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import _kernels
from .esa_kernel import ESAParams, VOFunction, gamma_eval, kernel_weights, select_parameters

__all__ = [
    "TimeGrid",
    "ESAHistory",
    "l1_scale",
    "l1_weights",
    "l1_derivative",
    "esa_history_advance",
    "esa_history_term",
    "fast_derivative_step",
    "fast_derivative_series",
    "history_scalars",
    "history_error_constant",
    "caputo_oracle",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k*dt`` on ``[0, horizon]``."""

    horizon: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one time step")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt


def l1_scale(alpha_k: float, dt: float) -> float:
    """``dt**(-alpha_k) / Gamma(2 - alpha_k)``, shared by both evaluators."""
    return dt ** (-alpha_k) / gamma_eval(2.0 - alpha_k)


def l1_weights(alpha_k: float, k: int) -> np.ndarray:
    """``a_l^k = (k-l)^(1-a) - (k-l-1)^(1-a)`` for ``l = 0..k-1``."""
    j = np.arange(k, 0, -1, dtype=float)
    b = 1.0 - alpha_k
    return j**b - (j - 1.0) ** b


def _alpha_values(alpha: VOFunction, grid: TimeGrid):
    restricted = alpha.restrict(grid.horizon, grid.n)
    return restricted, restricted.on_grid(grid.horizon, grid.n)


def _checked_series(u, grid: TimeGrid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n + 1,):
        raise ValueError(f"expected {grid.n + 1} samples, got shape {u.shape}")
    return u


def l1_derivative(u, alpha: VOFunction, grid: TimeGrid) -> np.ndarray:
    """L1 approximation ``D_k`` for ``k = 1..n`` (length-n array)."""
    u = _checked_series(u, grid)
    _, a = _alpha_values(alpha, grid)
    beta = 1.0 - a
    scale = np.array([0.0] + [l1_scale(ak, grid.dt) for ak in a[1:]])
    return _kernels.l1_convolve(np.diff(u), beta, scale)[1:]


@dataclass(frozen=True)
class ESAHistory:
    """Moments ``v_{k,i}`` of the history integral at level ``k``."""

    level: int
    moments: np.ndarray

    @classmethod
    def start(cls, params: ESAParams) -> "ESAHistory":
        """The level-1 history: all moments are zero."""
        return cls(1, np.zeros(params.n_eps))


def esa_history_advance(hist: ESAHistory, u_prev: float, u_prev2: float,
                        params: ESAParams, grid: Optional[TimeGrid] = None) -> ESAHistory:
    """Advance from level ``k-1`` to ``k`` given ``u(t_{k-1})`` and ``u(t_{k-2})``.

    ``v_k = exp(-x) v_{k-1} + (exp(-x) - exp(-2x))/x * (u_{k-1} - u_{k-2})``
    with ``x = lambda_i dt / T``.
    """
    if grid is not None and not math.isclose(grid.dt / grid.horizon, params.delta, rel_tol=1e-12):
        raise ValueError("grid step does not match the ESA parameters")
    moments = params.decay * hist.moments + params.increment * (u_prev - u_prev2)
    return ESAHistory(hist.level + 1, moments)


def esa_history_term(hist: ESAHistory, alpha_k: float, params: ESAParams, horizon: float) -> float:
    """``T^(-a_k) / Gamma(1 - a_k) * sum_i theta_{k,i} v_{k,i}``; zero at level 1."""
    if hist.level <= 1:
        return 0.0
    theta = kernel_weights(params, alpha_k)
    coeff = horizon ** (-alpha_k) / gamma_eval(1.0 - alpha_k)
    return coeff * float(theta @ hist.moments)


def fast_derivative_step(hist: ESAHistory, u_k: float, u_km1: float, alpha_k: float,
                         params: ESAParams, grid: TimeGrid) -> float:
    """Fast approximation of the derivative at level ``hist.level``."""
    local = l1_scale(alpha_k, grid.dt) * (u_k - u_km1)
    if hist.level <= 1:
        return local
    return esa_history_term(hist, alpha_k, params, grid.horizon) + local


def history_scalars(scheme: str, n: int, n_eps: int = 0) -> int:
    """Scalars of history retained per derivative stream.

    The L1 path keeps every past value; the fast path keeps the moments
    plus ``u_{k-1}`` and ``u_{k-2}``.
    """
    if scheme == "l1":
        return n + 1
    if scheme == "fast":
        return n_eps + 2
    raise ValueError(f"unknown scheme {scheme!r}")


def fast_derivative_series(u, alpha: VOFunction, grid: TimeGrid, epsilon: float):
    """Fast derivative ``D_k``, ``k = 1..n``, and the ESA parameters used."""
    u = _checked_series(u, grid)
    restricted, a = _alpha_values(alpha, grid)
    params = select_parameters(epsilon, restricted, grid.horizon, grid.dt)
    out = np.empty(grid.n)
    hist = ESAHistory.start(params)
    out[0] = fast_derivative_step(hist, u[1], u[0], a[1], params, grid)
    for k in range(2, grid.n + 1):
        hist = esa_history_advance(hist, u[k - 1], u[k - 2], params)
        out[k - 1] = fast_derivative_step(hist, u[k], u[k - 1], a[k], params, grid)
    return out, params


def history_error_constant(alpha_values, grid: TimeGrid, max_slope: float) -> float:
    """``max_k t_k^(1-a_k) max|u'| / ((1-a_k) Gamma(1-a_k))`` over ``k >= 1``.

    ``max_slope`` bounds ``|u'|``; for sampled data use the largest divided
    difference.
    """
    t = grid.nodes[1:]
    a = np.asarray(alpha_values, dtype=float)[1:]
    g = np.array([gamma_eval(1.0 - x) for x in a])
    return float(np.max(t ** (1.0 - a) * max_slope / ((1.0 - a) * g)))


def caputo_oracle(u: Callable, u_prime: Callable[[float], float], alpha: VOFunction,
                  t: float, tol: float = 1e-12) -> float:
    """Continuous variable-order Caputo derivative at ``t`` by adaptive quadrature.

    Substituting ``t - tau = sigma**(1/(1-a))`` with ``a = alpha(t)`` removes
    the endpoint singularity, leaving
    ``(1/((1-a) Gamma(1-a))) * int_0^{t^(1-a)} u'(t - sigma^(1/(1-a))) dsigma``.
    ``u`` is accepted for call-site symmetry; only ``u_prime`` enters.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    a = float(alpha(t))
    p = 1.0 / (1.0 - a)
    upper = t ** (1.0 - a)

    def integrand(sigma):
        return u_prime(t - min(sigma**p, t))

    value, err = integrate.quad(integrand, 0.0, upper, epsabs=tol, epsrel=0.0, limit=200)
    if not err <= tol:
        raise RuntimeError(f"quadrature did not converge: error estimate {err:.3e} > {tol:.1e}")
    return value / ((1.0 - a) * gamma_eval(1.0 - a))
