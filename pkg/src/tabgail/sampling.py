"""Markovian sampling and the stochastic estimators used by the nested loop.

Visitation samples come from one persistent trajectory of the restart kernel
``(1 - gamma) zeta + gamma P``; Q estimates come from EstQ rollouts under the
raw kernel ``P``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import cumulative, estq_rollouts, walk_chain
from .mdp import exact_q, policy_table

STREAMS = {
    "expert-chain": 0,
    "learner-chain": 1,
    "estq": 2,
    "npg-sa": 3,
    "alpha-init": 4,
    "instance": 5,
}


def substream(seed, name):
    """Independent generator for a named sub-stream of a 64-bit run seed."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name]])


@dataclass(frozen=True)
class TrajectoryBuffer:
    """Aligned ``states``/``actions`` of one query; ``last_*`` resume the chain."""

    states: np.ndarray
    actions: np.ndarray
    last_state: int = -1
    last_action: int = -1

    def __len__(self):
        return self.states.shape[0]


def sample_chain(mdp, policy, length, rng, buffer=None):
    """Draw ``length`` consecutive (s, a) pairs, resuming from ``buffer`` if given."""
    pi = policy_table(policy)
    s_prev = -1 if buffer is None else buffer.last_state
    a_prev = -1 if buffer is None else buffer.last_action
    u = rng.random((length, 3))
    out_s = np.empty(length, dtype=np.int64)
    out_a = np.empty(length, dtype=np.int64)
    if length:
        walk_chain(
            cumulative(mdp.transition), cumulative(pi), cumulative(mdp.initial_dist),
            mdp.gamma, s_prev, a_prev, u, out_s, out_a,
        )
        s_prev, a_prev = int(out_s[-1]), int(out_a[-1])
    return TrajectoryBuffer(out_s, out_a, s_prev, a_prev)


class MarkovChain:
    """A persistent sampling trajectory that owns its generator."""

    def __init__(self, mdp, rng):
        self.mdp = mdp
        self.rng = rng
        self.buffer = None

    def sample(self, policy, length):
        self.buffer = sample_chain(self.mdp, policy, length, self.rng, self.buffer)
        return self.buffer


@dataclass(frozen=True)
class EstQConfig:
    """Geometric-horizon settings; the default cap leaves tail mass <= 1e-8."""

    gamma: float
    horizon_cap: int = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.horizon_cap is None:
            cap = 0 if self.gamma == 0.0 else math.ceil(math.log(1e-8) / math.log(math.sqrt(self.gamma)))
            object.__setattr__(self, "horizon_cap", max(cap, 1))

    @property
    def sqrt_gamma(self):
        return math.sqrt(self.gamma)


@dataclass
class EstQStats:
    calls: int = 0
    truncated: int = 0


def est_q_batch(mdp, policy, states, actions, reward, rng, config=None, stats=None):
    """Independent EstQ draws for each ``(states[i], actions[i])``.

    The horizon ``T ~ Geom(1 - gamma^{1/2})`` lives on {0, 1, ...}, and the
    estimate ``sum_{t=0}^{T} gamma^{t/2} r(s_t, a_t)`` is unbiased for Q.
    """
    config = config or EstQConfig(mdp.gamma)
    states = np.ascontiguousarray(states, dtype=np.int64)
    actions = np.ascontiguousarray(actions, dtype=np.int64)
    n = states.shape[0]
    p = 1.0 - config.sqrt_gamma
    horizons = rng.geometric(p, size=n) - 1 if p < 1.0 else np.zeros(n, dtype=np.int64)
    over = horizons > config.horizon_cap
    horizons = np.minimum(horizons, config.horizon_cap).astype(np.int64)
    if stats is not None:
        stats.calls += n
        stats.truncated += int(over.sum())
    u = rng.random((int(horizons.sum()), 2))
    out = np.empty(n)
    estq_rollouts(
        cumulative(mdp.transition), cumulative(policy_table(policy)),
        np.ascontiguousarray(reward, dtype=float), config.sqrt_gamma,
        states, actions, horizons, u, out,
    )
    return out


def est_q(mdp, policy, s, a, reward, rng, config=None):
    """A single unbiased EstQ draw for the pair ``(s, a)``."""
    return float(est_q_batch(mdp, policy, [s], [a], reward, rng, config)[0])


def reward_grad_from_samples(problem, alpha, expert_buf, learner_buf):
    """``(1/((1-gamma) B)) sum_i [grad r(s_i^E, a_i^E) - grad r(s_i, a_i)] - grad psi``."""
    rm = problem.reward_model
    g = rm.reward_grad(alpha)
    B = len(expert_buf)
    if len(learner_buf) != B:
        raise ValueError("expert and learner minibatches must have equal length")
    diff = g[expert_buf.states, expert_buf.actions].sum(axis=0) - g[learner_buf.states, learner_buf.actions].sum(axis=0)
    return diff / ((1.0 - problem.gamma) * B) - rm.psi_grad(alpha)


def reward_grad_estimate(problem, theta, alpha, B, expert_chain, learner_chain):
    """Query length-``B`` continuations of both chains and return the ascent direction."""
    if B < 1:
        raise ValueError("B must be at least 1")
    eb = expert_chain.sample(problem.expert, B)
    lb = learner_chain.sample(theta, B)
    return reward_grad_from_samples(problem, alpha, eb, lb)


def policy_grad_from_samples(problem, theta, alpha, states, rng=None, mode="sample", config=None, stats=None):
    """Estimate ``grad_theta F`` from visited states ``s_0..s_{b-1}``.

    Entry ``(s, a)`` averages ``-Q_i(s, a) 1{s_i = s} / (1 - gamma)`` over the
    minibatch. In ``sample`` mode every visit ``i`` gets its own EstQ draw for
    each action; ``exact-q`` substitutes the exact Q-table.
    """
    mdp = problem.mdp
    pi = policy_table(theta)
    r = problem.reward_model.reward(alpha)
    states = np.asarray(states, dtype=np.int64)
    b = states.shape[0]
    n_a = mdp.n_actions
    grad = np.zeros((mdp.n_states, n_a))
    if mode == "exact-q":
        counts = np.bincount(states, minlength=mdp.n_states)
        q = exact_q(mdp, pi, r).q
        grad = -(counts[:, None] * q) / (b * (1.0 - mdp.gamma))
        return grad
    if mode != "sample":
        raise ValueError(f"unknown estimator mode {mode!r}")
    s_rep = np.repeat(states, n_a)
    a_rep = np.tile(np.arange(n_a), b)
    qhat = est_q_batch(mdp, pi, s_rep, a_rep, r, rng, config, stats).reshape(b, n_a)
    np.add.at(grad, states, qhat)
    return -grad / (b * (1.0 - mdp.gamma))


def policy_grad_estimate(problem, theta, alpha, b, learner_chain, rng=None, mode="sample", stats=None):
    buf = learner_chain.sample(theta, b)
    return policy_grad_from_samples(problem, theta, alpha, buf.states, rng, mode, stats=stats)


def negentropy(pi):
    """``omega(pi(.|s)) = sum_a pi log pi + log|A|`` per state (zero at uniform)."""
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0.0):
        raise ValueError("negative entropy needs a strictly positive policy row")
    return (pi * np.log(pi)).sum(axis=1) + np.log(pi.shape[1])


def regularized_reward(problem, theta, alpha, lam):
    """Entropy-regularized reward ``r_alpha(s, a) - lam * omega(pi(.|s))``."""
    r = problem.reward_model.reward(alpha)
    if lam == 0:
        return r
    return r - lam * negentropy(policy_table(theta))[:, None]


def regularized_q_estimate(problem, theta, alpha, lam, mode="exact-q", rng=None, stats=None):
    """Q-table of the entropy-regularized reward at every ``(s, a)``.

    ``exact-q`` solves the Bellman equation; ``sample`` runs one EstQ per pair.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mdp = problem.mdp
    pi = policy_table(theta)
    r = regularized_reward(problem, pi, alpha, lam)
    if mode in ("exact-q", "exact"):
        return exact_q(mdp, pi, r).q
    if mode != "sample":
        raise ValueError(f"unknown estimator mode {mode!r}")
    S, A = pi.shape
    ss, aa = np.divmod(np.arange(S * A), A)
    return est_q_batch(mdp, pi, ss, aa, r, rng, stats=stats).reshape(S, A)


def regularized_q_envelope(problem, lam):
    """Almost-sure bound on ``|Q_hat|`` from EstQ under the regularized reward."""
    g = problem.gamma
    return (problem.reward_model.R_max + lam * math.log(problem.mdp.n_actions)) / (1.0 - math.sqrt(g))
