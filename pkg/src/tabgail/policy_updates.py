"""Outer-loop policy updates: projected, Frank-Wolfe, mirror-descent and natural gradient."""

import math
from dataclasses import dataclass

import numpy as np

from .mdp import DirectPolicy, SoftmaxPolicy, exact_q, exact_visitation, policy_table
from .sampling import est_q_batch

ALGORITHMS = ("ppg", "fwpg", "trpo", "trpo-reg", "npg")
W_CAP = 1e8


def project_simplex(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex.

    Sort-and-threshold: find the largest k with ``u_k > (sum_{j<=k} u_j - 1)/k``
    for the descending sort ``u`` and shift by that threshold.
    """
    v = np.asarray(v, dtype=float)
    squeeze = v.ndim == 1
    x = np.atleast_2d(v)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project non-finite entries")
    n = x.shape[1]
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    k = n - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(x.shape[0]), k - 1] / k
    out = np.maximum(x - tau[:, None], 0.0)
    return out[0] if squeeze else out


def _renormalize(t):
    return t / t.sum(axis=1, keepdims=True)


def ppg_step(theta, eta, grad_estimate):
    """``theta_s <- P_simplex(theta_s - eta * g_s)`` for every state."""
    t = policy_table(theta)
    return DirectPolicy(_renormalize(project_simplex(t - eta * np.asarray(grad_estimate))))


def fw_vertex(grad_estimate):
    """Per state, unit mass on the lowest-index action minimizing the gradient."""
    g = np.asarray(grad_estimate, dtype=float)
    v = np.zeros_like(g)
    v[np.arange(g.shape[0]), g.argmin(axis=1)] = 1.0
    return v


def fwpg_step(theta, eta, grad_estimate):
    """``theta + eta (v - theta)`` with the linear-minimization vertex ``v``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("Frank-Wolfe stepsize must lie in [0, 1]")
    t = policy_table(theta)
    return DirectPolicy(_renormalize(t + eta * (fw_vertex(grad_estimate) - t)))


def trpo_step(theta, eta, lam, q_hat):
    """Closed-form KL mirror step ``theta * exp(eta (Q_lam - lam log theta))``, normalized."""
    t = policy_table(theta)
    if np.any(t <= 0.0):
        raise ValueError("mirror step needs a strictly positive policy")
    z = eta * (np.asarray(q_hat, dtype=float) - lam * np.log(t)) + np.log(t)
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return DirectPolicy(_renormalize(w))


# ---------------------------------------------------------------------------
# natural policy gradient


def fisher_matrix(mdp, theta, occupancy=None):
    """Fisher information of the tabular softmax under nu_theta, as a dense (SA, SA) matrix."""
    pi = policy_table(theta)
    d = (occupancy or exact_visitation(mdp, pi)).d
    S, A = pi.shape
    Fm = np.zeros((S * A, S * A))
    for s in range(S):
        blk = d[s] * (np.diag(pi[s]) - np.outer(pi[s], pi[s]))
        Fm[s * A:(s + 1) * A, s * A:(s + 1) * A] = blk
    return Fm


def natural_gradient_target(problem, theta, alpha, lam):
    """Dense solve of ``(F + lam I) W = E_nu[A grad log pi]``: the SA fixed point."""
    mdp = problem.mdp
    pi = policy_table(theta)
    occ = exact_visitation(mdp, pi)
    adv = exact_q(mdp, pi, problem.reward_model.reward(alpha)).adv
    rhs = (occ.nu * adv).ravel()
    Fm = fisher_matrix(mdp, pi, occ)
    return np.linalg.lstsq(Fm + lam * np.eye(Fm.shape[0]), rhs, rcond=None)[0].reshape(pi.shape)


@dataclass(frozen=True)
class NpgSaState:
    W: np.ndarray
    lambda_P: float
    zeta_prime: float


def _draw_actions(pi, states, rng):
    cdf = np.cumsum(pi[states], axis=1)
    u = rng.random(states.shape[0])
    return np.minimum((u[:, None] >= cdf).sum(axis=1), pi.shape[1] - 1)


def npg_sa(problem, theta, alpha, lam, M, T_c, beta_W, chain, rng, mode="exact-q", trace=False):
    """Linear stochastic approximation for the regularized natural gradient.

    Draws ``M * T_c`` states along the learner chain with two independent
    actions each, then runs ``T_c`` averaged updates
    ``W <- W + beta_W mean_i[(Q_i - phi_i.W) phi_i - Q_i phi'_i - lam W]``
    from ``W = 0``. Its fixed point is ``(F + lam I)^{-1} E_nu[A grad log pi]``.
    """
    mdp = problem.mdp
    pi = policy_table(theta)
    S, A = pi.shape
    r = problem.reward_model.reward(alpha)
    buf = chain.sample(pi, M * T_c)
    s_all, a_all = buf.states, buf.actions
    a2_all = _draw_actions(pi, s_all, rng)
    if mode == "exact-q":
        q_all = exact_q(mdp, pi, r).q[s_all, a_all]
    elif mode == "sample":
        q_all = est_q_batch(mdp, pi, s_all, a_all, r, rng)
    else:
        raise ValueError(f"unknown estimator mode {mode!r}")
    W = np.zeros((S, A))
    history = []
    for k in range(T_c):
        sl = slice(k * M, (k + 1) * M)
        s, a, a2, q = s_all[sl], a_all[sl], a2_all[sl], q_all[sl]
        # score of (s, a) is e_s (x) (e_a - pi_s), so phi.W = W[s, a] - pi_s . W_s
        piW = (pi[s] * W[s]).sum(axis=1)
        c = q - (W[s, a] - piW)
        G = np.zeros((S, A))
        np.add.at(G, (s, a), c)
        np.add.at(G, (s, a2), -q)
        # the -pi_s parts of both scores combine to -(c - q) pi_s
        np.add.at(G, s, -(c - q)[:, None] * pi[s])
        W = W + beta_W * (G / M - lam * W)
        if not np.isfinite(W).all() or np.abs(W).max() > W_CAP:
            raise FloatingPointError("natural-gradient SA diverged; reduce beta_W")
        if trace:
            history.append(W.copy())
    return (W, history) if trace else W


def npg_diagnostics(problem, theta, alpha, lam):
    """``(lambda_P, zeta_prime)`` at one probe: Fisher eigenvalue floor and fit residual."""
    mdp = problem.mdp
    pi = policy_table(theta)
    occ = exact_visitation(mdp, pi)
    Fm = fisher_matrix(mdp, pi, occ)
    lambda_P = float(np.linalg.eigvalsh(Fm + lam * np.eye(Fm.shape[0])).min())
    adv = exact_q(mdp, pi, problem.reward_model.reward(alpha)).adv
    # weighted least squares: rows are sqrt(nu(s,a)) * score(s,a)
    S, A = pi.shape
    ss, aa = np.divmod(np.arange(S * A), A)
    X = SoftmaxPolicy(np.log(pi)).score(ss, aa)
    w = np.sqrt(occ.nu.ravel())
    y = adv.ravel()
    coef = np.linalg.lstsq(w[:, None] * X, w * y, rcond=None)[0]
    resid = float(((X @ coef - y) ** 2 * occ.nu.ravel()).sum())
    return lambda_P, math.sqrt(max(resid, 0.0))


def npg_step(theta, eta, W):
    """Softmax logits ``theta + eta W``: descent on F along the natural direction."""
    return SoftmaxPolicy(np.asarray(theta.logits) + eta * np.asarray(W))


def default_beta_w(lambda_P, lam):
    C_phi = SoftmaxPolicy.constants(1)[0]
    return lambda_P / (4.0 * (C_phi**2 + lam) ** 2)


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class PolicyUpdateConfig:
    """Outer stepsize schedule and estimator settings.

    Default schedules are the ones with proven rates: constant ``eta_ppg`` for
    PPG, ``(1 - gamma)/sqrt(T)`` for FWPG, TRPO and NPG, ``1/(lam (t + 2))`` for
    regularized TRPO. ``eta`` replaces the schedule by a constant and
    ``eta_scale`` multiplies it.
    """

    algorithm: str
    T: int
    gamma: float
    eta_ppg: float = None
    lam: float = 0.0
    b: int = 100
    M: int = 500
    T_c: int = 200
    beta_W: float = None
    eta: float = None
    eta_scale: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.algorithm == "trpo-reg" and self.lam <= 0:
            raise ValueError("trpo-reg needs lambda > 0")
        if self.algorithm == "ppg" and self.eta is None and self.eta_ppg is None:
            raise ValueError("ppg needs eta_ppg from the smoothness constants or an explicit eta")

    def stepsize(self, t):
        if self.eta is not None:
            eta = self.eta
        elif self.algorithm == "ppg":
            eta = self.eta_ppg
        elif self.algorithm == "trpo-reg":
            eta = 1.0 / (self.lam * (t + 2))
        else:
            eta = (1.0 - self.gamma) / math.sqrt(max(self.T, 1))
        eta *= self.eta_scale
        if self.algorithm == "fwpg":
            eta = min(eta, 1.0)
        return eta
