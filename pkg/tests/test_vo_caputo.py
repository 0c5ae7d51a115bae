import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracsum.esa_kernel import VOFunction, gamma_eval, linear, select_parameters, sin5
from fracsum.vo_caputo import (
    ESAHistory,
    TimeGrid,
    caputo_oracle,
    esa_history_advance,
    fast_derivative_series,
    fast_derivative_step,
    history_error_constant,
    history_scalars,
    l1_derivative,
    l1_scale,
    l1_weights,
)

BOX = VOFunction(lambda t: 0.5 + 0.0 * t, 0.25, 0.75, "box")


def _exact_t2(t, a):
    return 2.0 * t ** (2 - a) / np.array([gamma_eval(3 - x) for x in np.atleast_1d(a)])


def _dense_l1(u, a, dt):
    # textbook O(n^2) double loop used as an independent oracle
    n = len(u) - 1
    out = np.zeros(n)
    for k in range(1, n + 1):
        b = 1 - a[k]
        acc = 0.0
        for l in range(k):
            acc += ((k - l) ** b - (k - l - 1) ** b) * (u[l + 1] - u[l])
        out[k - 1] = acc * dt ** (-a[k]) / math.gamma(2 - a[k])
    return out


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert g.nodes[-1] == 2.0
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_l1_weights_telescoping():
    w = l1_weights(0.3, 50)
    assert w.sum() == pytest.approx(50**0.7, rel=1e-14)
    assert w[-1] == 1.0


def test_l1_matches_dense_oracle():
    g = TimeGrid(1.0, 40)
    a = sin5().on_grid(1.0, 40)
    u = np.cos(3 * g.nodes) + g.nodes**1.5
    np.testing.assert_allclose(l1_derivative(u, sin5(), g), _dense_l1(u, a, g.dt), rtol=1e-12)


def test_l1_constant_is_zero():
    g = TimeGrid(1.0, 100)
    assert np.all(l1_derivative(np.full(101, 3.7), sin5(), g) == 0.0)


@pytest.mark.parametrize("alpha", [sin5(), linear()])
def test_l1_exact_for_linear_u(alpha):
    g = TimeGrid(1.0, 500)
    a = alpha.on_grid(1.0, 500)[1:]
    t = g.nodes[1:]
    exact = t ** (1 - a) / np.array([gamma_eval(2 - x) for x in a])
    np.testing.assert_allclose(l1_derivative(g.nodes, alpha, g), exact, rtol=1e-12)


def test_l1_rejects_wrong_length():
    with pytest.raises(ValueError):
        l1_derivative(np.zeros(5), sin5(), TimeGrid(1.0, 10))


def test_l1_sin5_t2_derivative_error_magnitude():
    g = TimeGrid(1.0, 10000)
    a = sin5().on_grid(1.0, 10000)
    err = np.abs(l1_derivative(g.nodes**2, sin5(), g) - _exact_t2(g.nodes[1:], a[1:])).max()
    # pointwise derivative error; smaller than dt^(2-amax) times a modest constant
    assert err < 10 * g.dt ** (2 - 0.75)


# ---- history recursion ---------------------------------------------------

def _direct_moments(u, params, k, dt, horizon):
    # integral over [t_0, t_{k-1}] of exp(-lambda (t_k - tau)/T) times the piecewise-constant slope
    out = np.zeros(params.n_eps)
    for i, lam in enumerate(params.exponents):
        tot = 0.0
        for l in range(k - 1):
            slope = (u[l + 1] - u[l]) / dt
            val, _ = integrate.quad(lambda tau: math.exp(-lam * (k * dt - tau) / horizon),
                                    l * dt, (l + 1) * dt, epsabs=0, epsrel=1e-13)
            tot += slope * val
        out[i] = tot
    return out


def test_pure_decay_when_values_repeat():
    p = select_parameters(1e-6, BOX, 1.0, 1e-3)
    h = ESAHistory(5, np.linspace(1, 2, p.n_eps))
    nxt = esa_history_advance(h, 0.4, 0.4, p)
    np.testing.assert_array_equal(nxt.moments, np.exp(-p.exponents * p.delta) * h.moments)
    assert nxt.level == 6


def test_second_level_matches_quadrature():
    p = select_parameters(1e-4, BOX, 1.0, 0.05)
    u = np.array([0.3, 1.1, 0.0])
    h2 = esa_history_advance(ESAHistory.start(p), u[1], u[0], p)
    np.testing.assert_allclose(h2.moments, _direct_moments(u, p, 2, 0.05, 1.0), rtol=1e-12)


def test_recursion_telescopes_to_full_integral():
    p = select_parameters(1e-4, BOX, 1.0, 0.05)
    rng = np.random.default_rng(3)
    u = rng.normal(size=21)
    h = ESAHistory.start(p)
    for k in range(2, 13):
        h = esa_history_advance(h, u[k - 1], u[k - 2], p)
    np.testing.assert_allclose(h.moments, _direct_moments(u, p, 12, 0.05, 1.0), rtol=1e-11, atol=1e-300)


def test_advance_checks_grid():
    p = select_parameters(1e-4, BOX, 1.0, 0.05)
    with pytest.raises(ValueError):
        esa_history_advance(ESAHistory.start(p), 1.0, 0.0, p, TimeGrid(1.0, 10))


def test_increment_stable_for_tiny_exponents():
    p = select_parameters(1e-12, BOX, 1.0, 1e-5)
    x = p.exponents * p.delta
    assert x.min() < 1e-12
    ref = np.exp(-x) * -np.expm1(-x) / x
    np.testing.assert_allclose(p.increment, ref, rtol=1e-14)
    assert np.all(np.isfinite(p.increment)) and np.all(p.increment >= 0)


# ---- fast derivative -----------------------------------------------------

@pytest.mark.parametrize("alpha", [sin5(), linear()])
def test_first_step_bitwise_equal(alpha):
    g = TimeGrid(1.0, 200)
    u = np.sin(g.nodes) + 1
    fast, _ = fast_derivative_series(u, alpha, g, g.dt**2)
    assert fast[0] == l1_derivative(u, alpha, g)[0]


def test_fast_constant_is_zero():
    g = TimeGrid(1.0, 300)
    fast, _ = fast_derivative_series(np.full(301, -2.0), sin5(), g, 1e-6)
    assert np.all(fast == 0.0)


@pytest.mark.parametrize("alpha", [sin5(), linear()])
def test_fast_minus_l1_bounded_by_constant_times_eps(alpha):
    g = TimeGrid(1.0, 2000)
    u = g.nodes**2
    ref = l1_derivative(u, alpha, g)
    a = alpha.on_grid(1.0, 2000)
    const = history_error_constant(a, g, max_slope=2.0)
    diffs = []
    for eps in (1e-4, 1e-6, 1e-8):
        fast, _ = fast_derivative_series(u, alpha, g, eps)
        d = np.abs(fast - ref).max()
        assert d <= const * eps
        diffs.append(d)
    assert diffs[0] / diffs[1] > 50 and diffs[1] / diffs[2] > 50


def test_history_storage_counter():
    assert history_scalars("l1", 1000) == 1001
    assert history_scalars("fast", 1000, 180) == 182
    with pytest.raises(ValueError):
        history_scalars("x", 10)


def test_step_function_level_one_is_local_term():
    p = select_parameters(1e-6, BOX, 1.0, 1e-3)
    g = TimeGrid(1.0, 1000)
    d = fast_derivative_step(ESAHistory.start(p), 2.0, 1.5, 0.5, p, g)
    assert d == l1_scale(0.5, g.dt) * 0.5


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(1.0, 60)
    u, w = rng.normal(size=(2, 61))
    for ev in (lambda x: l1_derivative(x, sin5(), g), lambda x: fast_derivative_series(x, sin5(), g, 1e-6)[0]):
        lhs = ev(a * u + b * w)
        rhs = a * ev(u) + b * ev(w)
        scale = np.abs(a * ev(u)).max() + np.abs(b * ev(w)).max() + 1e-300
        assert np.abs(lhs - rhs).max() <= 1e-13 * scale


# ---- quadrature oracle ---------------------------------------------------

def test_oracle_t_squared():
    for t in (0.1, 0.5, 1.0):
        a = float(sin5()(t))
        got = caputo_oracle(lambda s: s * s, lambda s: 2 * s, sin5(), t)
        assert got == pytest.approx(2 * t ** (2 - a) / math.gamma(3 - a), rel=1e-12)


def test_oracle_linear_and_constant():
    t = 0.7
    a = float(linear()(t))
    assert caputo_oracle(lambda s: s, lambda s: 1.0, linear(), t) == pytest.approx(
        t ** (1 - a) / math.gamma(2 - a), rel=1e-12)
    assert caputo_oracle(lambda s: 4.0, lambda s: 0.0, linear(), t) == 0.0


def test_oracle_rejects_t0():
    with pytest.raises(ValueError):
        caputo_oracle(lambda s: s, lambda s: 1.0, sin5(), 0.0)


def test_l1_order_against_oracle_t_cubed():
    ns = (100, 200, 400, 800)
    errs = []
    for n in ns:
        g = TimeGrid(1.0, n)
        d = l1_derivative(g.nodes**3, sin5(), g)
        k = np.arange(1, n + 1)
        ref = np.array([caputo_oracle(lambda s: s**3, lambda s: 3 * s * s, sin5(), g.nodes[j]) for j in k])
        errs.append(np.abs(d - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - (2 - 0.75)) <= 0.1), orders
