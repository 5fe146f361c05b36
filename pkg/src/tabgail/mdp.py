"""Finite MDPs, tabular policies and exact dynamic-programming oracles.

Everything here is solved with dense linear algebra: at desk scale (a few
hundred states at most) a direct solve is cheap and removes the iteration
tolerance from every downstream check.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import (
    check_discount,
    check_policy_shape,
    check_positive_int,
    check_probability_vector,
    check_row_stochastic,
)

TRANSITION_FLOOR = 1e-3


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularMdp:
    """Finite discounted MDP ``(S, A, P, zeta, gamma)``.

    ``transition[s, a, s2]`` is ``P(s2 | s, a)``; ``initial_dist`` is the
    start distribution zeta, which must put positive mass on every state
    unless ``full_support=False`` (allowed for pure DP evaluation only; the
    GAIL problem rejects such MDPs).
    """

    transition: np.ndarray
    initial_dist: np.ndarray
    gamma: float
    full_support: bool = True

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        check_row_stochastic(P, "transition")
        zeta = check_probability_vector(self.initial_dist, "initial_dist")
        if zeta.shape[0] != P.shape[0]:
            raise ValueError("initial_dist length does not match the number of states")
        if self.full_support and zeta.min() <= 0.0:
            # The gradient-dominance constant 1/((1-gamma) min zeta) would be infinite.
            raise ValueError("initial_dist must be strictly positive on every state")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "initial_dist", _frozen(zeta))
        object.__setattr__(self, "gamma", check_discount(self.gamma))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def mixture_transition(self):
        """Restart kernel ``(1 - gamma) zeta + gamma P`` whose stationary law is nu_pi."""
        return (1.0 - self.gamma) * self.initial_dist[None, None, :] + self.gamma * self.transition


@dataclass(frozen=True)
class DirectPolicy:
    """Direct parameterization: the table itself, one simplex row per state."""

    table: np.ndarray

    def __post_init__(self):
        t = check_row_stochastic(np.asarray(self.table, dtype=float), "policy table")
        if t.ndim != 2:
            raise ValueError(f"policy table must be 2-D, got shape {t.shape}")
        object.__setattr__(self, "table", _frozen(t))

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Tabular softmax policy ``pi(a|s) = exp(logits[s, a]) / sum_b exp(logits[s, b])``."""

    logits: np.ndarray

    def __post_init__(self):
        lg = np.asarray(self.logits, dtype=float)
        if lg.ndim != 2 or not np.all(np.isfinite(lg)):
            raise ValueError("logits must be a finite 2-D array")
        object.__setattr__(self, "logits", _frozen(lg))

    @property
    def table(self):
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def score(self, states, actions):
        """Flattened score vectors grad_theta log pi(a|s), one row per (s, a) pair."""
        states = np.asarray(states)
        actions = np.asarray(actions)
        n_s, n_a = self.logits.shape
        pi = self.table
        out = np.zeros((states.size, n_s, n_a))
        rows = np.arange(states.size)
        out[rows, states, :] = -pi[states]
        out[rows, states, actions] += 1.0
        return out.reshape(states.size, n_s * n_a)

    @staticmethod
    def constants(n_actions):
        """Bounds ``(C_phi, L_phi, C_pi)`` for the tabular softmax class.

        ``||e_a - pi||^2 <= 2``, the log-softmax Hessian has spectral norm at
        most 1/2, and TV(pi, pi') <= (sqrt(|A|) / 4) ||theta - theta'||.
        """
        return np.sqrt(2.0), 0.5, np.sqrt(n_actions) / 4.0


@dataclass(frozen=True)
class OccupancyMeasure:
    nu: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class QTable:
    q: np.ndarray
    v: np.ndarray
    adv: np.ndarray


def policy_table(policy):
    """Return the action-probability table of any supported policy object."""
    if isinstance(policy, (DirectPolicy, SoftmaxPolicy)):
        return policy.table
    return np.asarray(policy, dtype=float)


def _state_kernel(mdp, pi, mixture=False):
    P = mdp.mixture_transition() if mixture else mdp.transition
    return np.einsum("sa,sat->st", pi, P)


def exact_visitation(mdp, policy):
    """Discounted state-action visitation ``nu_pi`` and state visitation ``d_pi``.

    Solves ``d = (1 - gamma) zeta + gamma P_pi^T d`` directly.
    """
    pi = policy_table(policy)
    check_policy_shape(pi, mdp)
    P_pi = _state_kernel(mdp, pi)
    n = mdp.n_states
    A = np.eye(n) - mdp.gamma * P_pi.T
    rhs = (1.0 - mdp.gamma) * mdp.initial_dist
    d = np.linalg.solve(A, rhs)
    if np.abs(A @ d - rhs).max() > 1e-8:
        raise RuntimeError("visitation solve failed: residual above 1e-8")
    d = np.clip(d, 0.0, None)
    d /= d.sum()
    return OccupancyMeasure(nu=d[:, None] * pi, d=d)


def exact_q(mdp, policy, reward):
    """Exact Q, V and advantage of ``policy`` under the reward table ``reward[s, a]``."""
    pi = policy_table(policy)
    check_policy_shape(pi, mdp)
    reward = np.asarray(reward, dtype=float)
    if reward.shape != pi.shape:
        raise ValueError(f"reward has shape {reward.shape}, expected {pi.shape}")
    P_pi = _state_kernel(mdp, pi)
    r_pi = (pi * reward).sum(axis=1)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)
    q = reward + mdp.gamma * mdp.transition @ v
    return QTable(q=q, v=v, adv=q - v[:, None])


def average_value(mdp, policy, reward):
    """``V(pi, r) = E_{s ~ zeta} V^pi(s)``."""
    return float(mdp.initial_dist @ exact_q(mdp, policy, reward).v)


def exact_policy_gradient(mdp, policy, reward):
    """Gradient of ``V(pi_theta, r)`` w.r.t. the direct parameter table.

    Entry ``(s, a)`` is ``d_pi(s) Q^pi(s, a) / (1 - gamma)``; callers negate it
    to obtain the gradient of the GAIL objective.
    """
    occ = exact_visitation(mdp, policy)
    qt = exact_q(mdp, policy, reward)
    return occ.d[:, None] * qt.q / (1.0 - mdp.gamma)


def value_iteration(mdp, reward, tol=1e-10, max_iter=100_000):
    """Optimal Q-table under ``reward`` with Bellman residual <= tol."""
    reward = np.asarray(reward, dtype=float)
    q = np.zeros_like(reward)
    for _ in range(max_iter):
        q_new = reward + mdp.gamma * mdp.transition @ q.max(axis=1)
        if np.abs(q_new - q).max() <= tol:
            return q_new
        q = q_new
    raise RuntimeError("value iteration did not reach the requested tolerance")


def greedy_policy(q, atol=1e-9):
    """Deterministic greedy table, ties resolved toward the lowest action index."""
    q = np.asarray(q, dtype=float)
    best = q >= q.max(axis=1, keepdims=True) - atol
    idx = best.argmax(axis=1)
    table = np.zeros_like(q)
    table[np.arange(q.shape[0]), idx] = 1.0
    return table


def expert_from_reward(mdp, true_reward, epsilon=0.05):
    """Greedy optimal policy for ``true_reward``, mixed toward uniform by ``epsilon``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    table = greedy_policy(value_iteration(mdp, true_reward))
    table = (1.0 - epsilon) * table + epsilon / mdp.n_actions
    return DirectPolicy(table)


def random_mdp(n_states, n_actions, seed, gamma=0.9, floor=TRANSITION_FLOOR):
    """Random MDP with Dirichlet rows, every transition entry at least ``floor``.

    The floor makes every induced chain uniformly ergodic; zeta is uniform.
    """
    n_states = check_positive_int(n_states, "n_states")
    n_actions = check_positive_int(n_actions, "n_actions")
    if n_states * floor >= 1.0:
        raise ValueError("transition floor too large for the number of states")
    rng = np.random.default_rng(seed)
    raw = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P = floor + (1.0 - n_states * floor) * raw
    P /= P.sum(axis=2, keepdims=True)
    zeta = np.full(n_states, 1.0 / n_states)
    return TabularMdp(P, zeta, gamma)


_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))  # up, right, down, left


def gridworld_mdp(width, height, slip, gamma=0.9):
    """4-connected grid; the intended move happens with prob ``1 - slip``,
    otherwise one of the other three moves uniformly. Moves into walls stay put."""
    width = check_positive_int(width, "width")
    height = check_positive_int(height, "height")
    if not 0.0 <= slip <= 1.0:
        raise ValueError(f"slip must lie in [0, 1], got {slip}")
    n = width * height
    P = np.zeros((n, 4, n))
    for s in range(n):
        x, y = s % width, s // width
        targets = []
        for dx, dy in _MOVES:
            nx, ny = x + dx, y + dy
            targets.append(ny * width + nx if 0 <= nx < width and 0 <= ny < height else s)
        for a in range(4):
            for b in range(4):
                P[s, a, targets[b]] += (1.0 - slip) if a == b else slip / 3.0
    return TabularMdp(P, np.full(n, 1.0 / n), gamma)


def mdp_from_spec(spec, seed=0, gamma=0.9):
    """Build an MDP from ``random:S,A``, ``gridworld:W,H,SLIP`` or ``file:PATH``."""
    kind, _, args = spec.partition(":")
    try:
        if kind == "random":
            n_s, n_a = (int(x) for x in args.split(","))
            return random_mdp(n_s, n_a, seed, gamma=gamma)
        if kind == "gridworld":
            w, h, slip = args.split(",")
            return gridworld_mdp(int(w), int(h), float(slip), gamma=gamma)
        if kind == "file":
            return load_mdp(args)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid MDP spec {spec!r}: {exc}") from exc
    raise ValueError(f"invalid MDP spec {spec!r}")


def save_mdp(mdp, path):
    """Write the JSON MDP format (keys n_states, n_actions, gamma, zeta, P).

    ``P`` is the transition tensor flattened row-major over ``(s, a, s')``.
    """
    payload = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "zeta": mdp.initial_dist.tolist(),
        "P": mdp.transition.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_mdp(path):
    data = json.loads(Path(path).read_text())
    missing = {"n_states", "n_actions", "gamma", "zeta", "P"} - data.keys()
    if missing:
        raise ValueError(f"MDP file missing keys: {sorted(missing)}")
    n_s, n_a = int(data["n_states"]), int(data["n_actions"])
    P = np.asarray(data["P"], dtype=float)
    if P.size != n_s * n_a * n_s:
        raise ValueError(f"P has {P.size} entries, expected {n_s * n_a * n_s}")
    return TabularMdp(P.reshape(n_s, n_a, n_s), data["zeta"], data["gamma"])
