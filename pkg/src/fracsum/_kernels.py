"""Compiled inner loops for the O(n^2) L1 history sums and the Thomas solve."""

import numpy as np
from numba import njit


@njit(cache=True)
def l1_convolve(du, beta, scale):
    """``D_k = scale_k * sum_{j=1}^{k} w_j^k du_{k-j}``, ``w_j^k = j^b - (j-1)^b``.

    ``du[l] = u_{l+1} - u_l``; ``beta[k] = 1 - alpha_k``; index 0 of the
    output is unused.
    """
    n = du.shape[0]
    out = np.zeros(n + 1)
    logj = np.log(np.arange(n + 1).astype(np.float64))
    for k in range(1, n + 1):
        b = beta[k]
        prev = 0.0
        acc = 0.0
        for j in range(1, k + 1):
            cur = np.exp(b * logj[j])
            acc += (cur - prev) * du[k - j]
            prev = cur
        out[k] = scale[k] * acc
    return out


@njit(cache=True)
def l1_march(rhs, beta, scale):
    """Solve ``L1 D_k[u] = rhs_k`` for ``u_k - u_0``, k = 1..n.

    Uses ``w_1^k = 1``: ``du_{k-1} = rhs_k / scale_k - sum_{j>=2} w_j^k du_{k-j}``.
    """
    n = rhs.shape[0] - 1
    du = np.zeros(n)
    logj = np.log(np.arange(n + 1).astype(np.float64))
    for k in range(1, n + 1):
        b = beta[k]
        prev = 1.0
        acc = 0.0
        for j in range(2, k + 1):
            cur = np.exp(b * logj[j])
            acc += (cur - prev) * du[k - j]
            prev = cur
        du[k - 1] = rhs[k] / scale[k] - acc
    return du


@njit(cache=True)
def thomas(sub, diag, sup, rhs):
    m = diag.shape[0]
    cp = np.empty(m)
    x = np.empty(m)
    cp[0] = sup[0] / diag[0] if m > 1 else 0.0
    x[0] = rhs[0] / diag[0]
    for j in range(1, m):
        den = diag[j] - sub[j - 1] * cp[j - 1]
        if j < m - 1:
            cp[j] = sup[j] / den
        x[j] = (rhs[j] - sub[j - 1] * x[j - 1]) / den
    for j in range(m - 2, -1, -1):
        x[j] -= cp[j] * x[j + 1]
    return x


@njit(cache=True)
def esa_bank_step(bank, decay, increment, diff, theta):
    """Advance every node's moments in place and return ``bank @ theta``.

    ``bank[j, i] <- decay[i] * bank[j, i] + increment[i] * diff[j]``; one
    streaming pass over the node-major bank, no temporaries.
    """
    m, q = bank.shape
    out = np.empty(m)
    for j in range(m):
        d = diff[j]
        acc = 0.0
        for i in range(q):
            v = decay[i] * bank[j, i] + increment[i] * d
            bank[j, i] = v
            acc += theta[i] * v
        out[j] = acc
    return out
