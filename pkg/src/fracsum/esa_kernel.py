"""Exponential-sum approximation (ESA) of the power kernel s**(-gamma).

The kernel is represented on ``[delta, 1]`` as

    s**(-gamma) ~ sum_i theta_i * exp(-lambda_i * s),
    lambda_i = exp(i*h),  theta_i = h * exp(gamma*i*h) / Gamma(gamma),

for ``i = n_lo + 1, ..., n_hi``.  The exponents do not depend on ``gamma``,
so one set of exponents serves every time level of a variable-order
derivative; only the weights change with the order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as _complex_gamma

__all__ = [
    "GAMMA_DOMAIN",
    "VOFunction",
    "ESAParams",
    "gamma_eval",
    "closed_form_parameters",
    "select_parameters",
    "kernel_weights",
    "approx_kernel",
    "kernel_relative_error",
    "error_estimate",
    "n_eps_bound",
    "sin5",
    "linear",
    "custom_linear",
    "custom_sine",
]

# lower end is open: 1 - alpha(t_1) can be O(dt) for orders approaching 1
GAMMA_DOMAIN = (0.0, 3.5)

_LOG_SEC1 = -math.log(math.cos(1.0))


def gamma_eval(x: float) -> float:
    """Gamma function on the interval used by the library, ``(0, 3.5]``.

    Backed by :func:`math.gamma` (relative error near machine precision).
    """
    x = float(x)
    lo, hi = GAMMA_DOMAIN
    if not lo < x <= hi:
        raise ValueError(f"gamma_eval argument {x!r} outside ({lo}, {hi}]")
    return math.gamma(x)


@dataclass(frozen=True)
class VOFunction:
    """A variable order ``alpha(t)`` with bounds ``alpha_min <= alpha <= alpha_max``.

    Bounds may be omitted; :meth:`restrict` derives them from the values at
    grid times ``t_k, k >= 1`` (the only places any formula evaluates alpha).
    """

    func: Callable[[np.ndarray], np.ndarray]
    alpha_min: Optional[float] = None
    alpha_max: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if (self.alpha_min is None) != (self.alpha_max is None):
            raise ValueError("give both alpha bounds or neither")
        if self.alpha_min is not None:
            if not 0.0 < self.alpha_min <= self.alpha_max < 1.0:
                raise ValueError(
                    f"alpha bounds must satisfy 0 < {self.alpha_min} <= {self.alpha_max} < 1"
                )

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    @property
    def bounded(self) -> bool:
        return self.alpha_min is not None

    def on_grid(self, horizon: float, n: int) -> np.ndarray:
        """Values ``alpha(t_k)`` for ``k = 0..n``; entries ``k >= 1`` are checked."""
        t = np.arange(n + 1) * (horizon / n)
        values = np.asarray(self(t), dtype=float)
        inner = values[1:]
        if not np.all(np.isfinite(inner)):
            raise ValueError(f"alpha '{self.name}' is not finite on the grid")
        if self.bounded:
            tol = 1e-12
            if inner.min() < self.alpha_min - tol or inner.max() > self.alpha_max + tol:
                raise ValueError(
                    f"alpha '{self.name}' leaves [{self.alpha_min}, {self.alpha_max}] on the grid"
                )
        elif inner.min() <= 0.0 or inner.max() >= 1.0:
            raise ValueError(f"alpha '{self.name}' leaves (0, 1) on the grid")
        return values

    def restrict(self, horizon: float, n: int) -> "VOFunction":
        """Copy whose bounds are the extrema of alpha over ``t_k, k = 1..n``."""
        inner = self.on_grid(horizon, n)[1:]
        return VOFunction(self.func, float(inner.min()), float(inner.max()), self.name)


def sin5() -> VOFunction:
    """``alpha(t) = (2 + sin 5t) / 4`` with bounds [0.25, 0.75]."""
    return VOFunction(lambda t: (2.0 + np.sin(5.0 * t)) / 4.0, 0.25, 0.75, "sin5")


def linear() -> VOFunction:
    """``alpha(t) = 1 - 0.8 t``; bounds come from the time grid (alpha(0) = 1)."""
    return VOFunction(lambda t: 1.0 - 0.8 * t, None, None, "linear")


def custom_linear(a: float, b: float) -> VOFunction:
    """``alpha(t) = a - b t``."""
    return VOFunction(lambda t: a - b * t, None, None, f"custom_linear({a:g},{b:g})")


def custom_sine(a: float, b: float, c: float) -> VOFunction:
    """``alpha(t) = (a + sin(b t)) / c``."""
    if c == 0:
        raise ValueError("c must be nonzero")
    return VOFunction(
        lambda t: (a + np.sin(b * t)) / c, None, None, f"custom_sine({a:g},{b:g},{c:g})"
    )


@dataclass(frozen=True)
class ESAParams:
    """Compressed-kernel configuration shared by every time level.

    ``decay`` and ``increment`` are the per-step factors of the history
    recursion, ``exp(-x)`` and ``(exp(-x) - exp(-2x)) / x`` with
    ``x = lambda_i * delta``.
    """

    epsilon: float
    h: float
    n_lo: int
    n_hi: int
    horizon: float
    delta: float
    alpha_min: float
    alpha_max: float
    exponents: np.ndarray = field(repr=False)
    decay: np.ndarray = field(repr=False)
    increment: np.ndarray = field(repr=False)

    @property
    def n_eps(self) -> int:
        return self.n_hi - self.n_lo

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_lo + 1, self.n_hi + 1)

    @classmethod
    def build(cls, epsilon, h, n_lo, n_hi, horizon, delta, alpha_min, alpha_max):
        if n_hi <= n_lo:
            raise ValueError(
                f"empty exponent range (n_lo={n_lo}, n_hi={n_hi}); "
                "kernel cannot be compressed at this accuracy/step"
            )
        i = np.arange(n_lo + 1, n_hi + 1)
        # extended precision keeps lambda_{i+1}/lambda_i = e^h to ~1 ulp for large |i h|
        lam = np.exp(i.astype(np.longdouble) * np.longdouble(h)).astype(float)
        x = lam * delta
        decay = np.exp(-x)
        small = x <= 1.0
        increment = np.empty_like(x)
        increment[small] = decay[small] * -np.expm1(-x[small]) / x[small]
        xb = x[~small]
        increment[~small] = (np.exp(-xb) - np.exp(-2.0 * xb)) / xb
        for arr in (lam, decay, increment):
            arr.setflags(write=False)
        return cls(epsilon, h, int(n_lo), int(n_hi), float(horizon), float(delta),
                   float(alpha_min), float(alpha_max), lam, decay, increment)


def _check_inputs(epsilon, alpha, horizon, dt):
    if not 0.0 < epsilon <= 1.0 / math.e:
        raise ValueError(f"epsilon must lie in (0, 1/e], got {epsilon!r}")
    if not 0.0 < dt < horizon:
        raise ValueError(f"need 0 < dt < horizon, got dt={dt!r}, horizon={horizon!r}")
    if not alpha.bounded:
        raise ValueError(f"alpha '{alpha.name}' has no bounds; restrict it to a grid first")


def _step_size(epsilon, alpha_max):
    return 2.0 * math.pi / (math.log(3.0) + alpha_max * _LOG_SEC1 + math.log(1.0 / epsilon))


def _index_range(epsilon, amin, amax, horizon, dt, h):
    n_lo = math.ceil((math.log(epsilon) + math.log(gamma_eval(1.0 + amax))) / (h * amin))
    n_hi = math.floor(
        (math.log(horizon / dt) + math.log(math.log(1.0 / epsilon)) + math.log(amin) + 0.5) / h
    )
    return n_lo, n_hi


def closed_form_parameters(epsilon: float, alpha: VOFunction, horizon: float, dt: float):
    """The closed-form ``(h, n_lo, n_hi)`` choice, rounded exactly as printed."""
    _check_inputs(epsilon, alpha, horizon, dt)
    h = _step_size(epsilon, alpha.alpha_max)
    return (h, *_index_range(epsilon, alpha.alpha_min, alpha.alpha_max, horizon, dt, h))


def _discretization_error(h, orders):
    # trapezoid error from Poisson summation: 2 sum_k |Gamma(g + 2 pi i k / h)| / Gamma(g)
    k = np.arange(1, 9)
    g = np.asarray(orders, dtype=float)[:, None]
    terms = np.abs(_complex_gamma(g + 2j * math.pi * k / h))
    return 2.0 * terms.sum(axis=1) / np.array([gamma_eval(x) for x in g[:, 0]])


def _lower_tail(h, n_lo, orders):
    # terms i <= n_lo dropped; bound at s = 1, the worst case
    g = np.asarray(orders, dtype=float)
    gam = np.array([gamma_eval(x) for x in g])
    return h * np.exp(g * n_lo * h) / (gam * -np.expm1(-g * h))


def _upper_tail_terms(h, start, delta, orders, count=64):
    # relative size at s = delta of each term i = start+1, ..., start+count
    g = np.asarray(orders, dtype=float)[:, None]
    i = np.arange(start + 1, start + count + 1)
    gam = np.array([gamma_eval(x) for x in g[:, 0]])[:, None]
    return h * np.exp(g * i * h - np.exp(i * h) * delta + g * math.log(delta)) / gam


def error_estimate(h, n_lo, n_hi, delta, orders):
    """A priori bound on the relative kernel error, one value per order.

    Sum of the trapezoid discretization error and the two truncated tails,
    each taken at its worst point of ``[delta, 1]``.
    """
    upper = _upper_tail_terms(h, n_hi, delta, orders).sum(axis=1)
    return _discretization_error(h, orders) + _lower_tail(h, n_lo, orders) + upper


def _probe_orders(alpha_min, alpha_max, count=5):
    return np.linspace(alpha_min, alpha_max, count)


def select_parameters(epsilon: float, alpha: VOFunction, horizon: float, dt: float) -> ESAParams:
    """Choose ``(h, n_lo, n_hi)`` for accuracy ``epsilon`` on ``[dt/horizon, 1]``.

    Starts from the closed-form choice and widens the index range, one index
    at a time on whichever tail dominates, until the a priori error estimate
    is at most ``epsilon`` for every probed order in ``[alpha_min, alpha_max]``.
    If the trapezoid error alone would use more than half of ``epsilon``,
    ``h`` is shrunk by 1% and the choice redone.
    """
    h, n_lo, n_hi = closed_form_parameters(epsilon, alpha, horizon, dt)
    delta = dt / horizon
    orders = _probe_orders(alpha.alpha_min, alpha.alpha_max)

    disc = _discretization_error(h, orders)
    while disc.max() > 0.5 * epsilon:
        h *= 0.99
        disc = _discretization_error(h, orders)
        n_lo, n_hi = _index_range(epsilon, alpha.alpha_min, alpha.alpha_max, horizon, dt, h)

    count = 64
    terms = _upper_tail_terms(h, n_hi, delta, orders, count)
    suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
    extra = 0
    while True:
        lower = _lower_tail(h, n_lo, orders)
        upper = suffix[:, extra] if extra < count else np.zeros_like(lower)
        total = disc + lower + upper
        worst = int(np.argmax(total))
        if total[worst] <= epsilon:
            break
        if lower[worst] >= upper[worst]:
            n_lo -= 1
        else:
            extra += 1
    n_hi += extra

    return ESAParams.build(epsilon, h, n_lo, n_hi, horizon, delta,
                           alpha.alpha_min, alpha.alpha_max)


def n_eps_bound(epsilon: float, alpha_min: float, alpha_max: float, horizon: float, dt: float) -> float:
    """Upper bound on the number of exponentials for the given configuration."""
    le = math.log(1.0 / epsilon)
    return 0.1 * (2.0 * le + math.log(alpha_max) + 2.0) * (
        math.log(horizon / dt) + le / alpha_min + math.log(le) + 1.5
    )


def kernel_weights(params: ESAParams, alpha_k: float) -> np.ndarray:
    """Weights ``h * exp(alpha_k*i*h) / Gamma(alpha_k)`` in exponent order."""
    tol = 1e-12
    if not params.alpha_min - tol <= alpha_k <= params.alpha_max + tol:
        raise ValueError(
            f"order {alpha_k!r} outside [{params.alpha_min}, {params.alpha_max}]"
        )
    return params.h * np.exp(alpha_k * params.h * params.indices) / gamma_eval(alpha_k)


def approx_kernel(params: ESAParams, alpha_k: float, s):
    """Exponential sum approximating ``s**(-alpha_k)`` for ``s`` in ``[delta, 1]``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < params.delta * (1 - 1e-14)) or np.any(s_arr > 1.0 + 1e-14):
        raise ValueError("s must lie in [delta, 1]")
    theta = kernel_weights(params, alpha_k)
    out = np.exp(-np.multiply.outer(s_arr, params.exponents)) @ theta
    return float(out) if out.ndim == 0 else out


def kernel_relative_error(params: ESAParams, alpha_k: float, s) -> np.ndarray:
    """``|s**-a - approx| * s**a`` at the given points."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    return np.abs(approx_kernel(params, alpha_k, s_arr) * s_arr**alpha_k - 1.0)
