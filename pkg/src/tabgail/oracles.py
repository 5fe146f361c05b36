"""Slow reference solvers used to cross-check the fast code paths."""

import itertools

import numpy as np


def simplex_projection_active_set(v):
    """Projection onto the simplex by enumerating every candidate support.

    For support ``I`` the equality-constrained minimizer is
    ``x_I = v_I - (sum v_I - 1)/|I|``; among the supports whose point is
    feasible the nearest one is the projection. Exponential in ``len(v)``.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    best, best_d = None, np.inf
    for size in range(1, n + 1):
        for idx in itertools.combinations(range(n), size):
            idx = list(idx)
            x = np.zeros(n)
            x[idx] = v[idx] - (v[idx].sum() - 1.0) / size
            if x.min() < -1e-15:
                continue
            d = ((x - v) ** 2).sum()
            if d < best_d:
                best, best_d = x, d
    return np.maximum(best, 0.0)


def simplex_projection_bisection(v, iters=200):
    """Projection via bisection on the threshold ``tau`` solving ``sum max(v - tau, 0) = 1``."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def monte_carlo_value(mdp, policy_table, reward, n_episodes, rng, horizon=None):
    """Mean and standard error of truncated discounted returns from zeta."""
    g = mdp.gamma
    horizon = horizon or int(np.ceil(np.log(1e-10) / np.log(g)))
    S, A = policy_table.shape
    s = rng.choice(S, size=n_episodes, p=mdp.initial_dist)
    ret = np.zeros(n_episodes)
    w = 1.0
    P_cdf = np.cumsum(mdp.transition, axis=2)
    pi_cdf = np.cumsum(policy_table, axis=1)
    for _ in range(horizon):
        a = np.minimum((rng.random(n_episodes)[:, None] >= pi_cdf[s]).sum(axis=1), A - 1)
        ret += w * reward[s, a]
        s = np.minimum((rng.random(n_episodes)[:, None] >= P_cdf[s, a]).sum(axis=1), S - 1)
        w *= g
    return float(ret.mean()), float(ret.std(ddof=1) / np.sqrt(n_episodes))


def finite_difference(f, x, direction, h=1e-6):
    return (f(x + h * direction) - f(x - h * direction)) / (2.0 * h)
