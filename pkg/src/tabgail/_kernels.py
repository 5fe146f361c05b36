"""Compiled inner loops for Markov-chain sampling.

All randomness enters as pre-drawn uniforms from a numpy Generator, so results
are reproducible and independent of numba's own RNG.
"""

import numpy as np
from numba import njit


def cumulative(p):
    """Row-wise CDF with the last entry pinned to 1 against rounding."""
    c = np.cumsum(np.asarray(p, dtype=float), axis=-1)
    c[..., -1] = 1.0
    return np.ascontiguousarray(c)


@njit(cache=True)
def _draw(cdf, u):
    n = cdf.shape[0]
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def walk_chain(P_cdf, pi_cdf, zeta_cdf, gamma, s_prev, a_prev, u, out_s, out_a):
    """Advance the restart chain: with prob. 1 - gamma resample from zeta, else step P.

    ``u`` has one row of three uniforms per step (restart, next state, action);
    ``s_prev < 0`` starts a fresh chain from zeta.
    """
    s = s_prev
    a = a_prev
    for i in range(u.shape[0]):
        if s < 0 or u[i, 0] < 1.0 - gamma:
            s = _draw(zeta_cdf, u[i, 1])
        else:
            s = _draw(P_cdf[s, a], u[i, 1])
        a = _draw(pi_cdf[s], u[i, 2])
        out_s[i] = s
        out_a[i] = a


@njit(cache=True)
def estq_rollouts(P_cdf, pi_cdf, reward, sqrt_gamma, s0, a0, horizons, u, out):
    """``sum_{t=0}^{T_i} gamma^{t/2} r(s_t, a_t)`` for each start pair, under raw P."""
    offset = 0
    for i in range(s0.shape[0]):
        s = s0[i]
        a = a0[i]
        total = reward[s, a]
        w = 1.0
        for _ in range(horizons[i]):
            s = _draw(P_cdf[s, a], u[offset, 0])
            a = _draw(pi_cdf[s], u[offset, 1])
            offset += 1
            w *= sqrt_gamma
            total += w * reward[s, a]
        out[i] = total
