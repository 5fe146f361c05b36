"""Input validation helpers shared by the public entry points."""

import numpy as np

PROB_ATOL = 1e-12


def check_probability_vector(v, name="vector", atol=PROB_ATOL):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(v < -atol):
        raise ValueError(f"{name} has negative entries (min {v.min():.3e})")
    if abs(v.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1, sums to {v.sum():.16f}")
    return v


def check_row_stochastic(m, name="matrix", atol=PROB_ATOL):
    """Validate that the last axis of ``m`` holds probability vectors."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(m < -atol):
        raise ValueError(f"{name} has negative entries (min {m.min():.3e})")
    dev = np.abs(m.sum(axis=-1) - 1.0)
    if dev.size and dev.max() > atol:
        raise ValueError(f"{name} rows must sum to 1 (max deviation {dev.max():.3e})")
    return m


def check_discount(gamma):
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    return gamma


def check_positive_int(value, name):
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_policy_shape(table, mdp):
    if table.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy has shape {table.shape}, expected {(mdp.n_states, mdp.n_actions)}"
        )


def as_rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
