"""Entropy-regularized objective and its global minimum.

Under the regularized reward ``r - lam * omega(pi(.|s))`` every value picks up
``-lam/(1-gamma) * Omega(pi)`` with ``Omega(pi) = sum_s d_pi(s) omega(pi(.|s))``.
That term does not involve alpha, so

    g_lam(theta) = g(theta) + lam/(1-gamma) * (Omega(pi_theta) - Omega(pi_E)).

In occupancy coordinates both pieces are convex, which gives an exact
reference value through a conic program.
"""

import cvxpy as cp
import numpy as np

from .mdp import DirectPolicy, exact_visitation, policy_table
from .objective import marginal_g


def occupancy_negentropy(mdp, policy, occupancy=None):
    """``Omega(pi) = sum_s d(s) (sum_a pi log pi + log|A|)``, zero for the uniform policy."""
    pi = policy_table(policy)
    d = (occupancy or exact_visitation(mdp, pi)).d
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(pi > 0, pi * np.log(pi), 0.0)
    return float(d @ (plogp.sum(axis=1) + np.log(pi.shape[1])))


def regularized_g(problem, theta, lam):
    if lam == 0:
        return marginal_g(problem, theta)
    mdp = problem.mdp
    shift = occupancy_negentropy(mdp, theta) - occupancy_negentropy(mdp, problem.expert)
    return marginal_g(problem, theta) + lam / (1.0 - mdp.gamma) * shift


def regularized_optimum(problem, lam):
    """``(min_theta g_lam, minimizing policy)`` from a convex program over occupancies.

    The alpha-maximum of a linear reward with quadratic penalty on a ball is
    the infimal convolution ``min_z ||z||^2/(2 mu) + R ||c - z||`` of the two
    conjugates; the entropy term is a sum of relative entropies ``nu log(nu/d)``.
    The returned value is ``g_lam`` re-evaluated exactly at the recovered
    policy, so it never undercuts an achievable value.
    """
    rm = problem.reward_model
    if rm.kind != "linear":
        raise NotImplementedError("the conic reference needs the linear reward kind")
    mdp = problem.mdp
    S, A, g = mdp.n_states, mdp.n_actions, mdp.gamma
    Phi = rm.features.reshape(S * A, rm.q)
    nu_E = problem.expert_occupancy.nu.ravel()
    nu = cp.Variable(S * A, nonneg=True)
    z = cp.Variable(rm.q)
    # flow: sum_a nu(s', a) = (1-g) zeta(s') + g sum_{s,a} P(s'|s,a) nu(s,a)
    E = np.kron(np.eye(S), np.ones((1, A)))
    flow = E - g * mdp.transition.reshape(S * A, S).T
    d = E @ nu
    c = Phi.T @ (nu_E - nu) / (1.0 - g)
    ent = cp.sum(cp.rel_entr(nu, E.T @ d))
    obj = cp.sum_squares(z) / (2.0 * rm.mu_psi) + rm.ball_radius * cp.norm(c - z, 2) + lam / (1.0 - g) * ent
    prob = cp.Problem(cp.Minimize(obj), [flow @ nu == (1.0 - g) * mdp.initial_dist])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"regularized reference solve failed: {prob.status}")
    v = np.maximum(nu.value.reshape(S, A), 1e-300)
    pi = DirectPolicy(v / v.sum(axis=1, keepdims=True))
    return regularized_g(problem, pi, lam), pi
