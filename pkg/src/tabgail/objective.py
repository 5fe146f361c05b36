"""The GAIL min-max objective on a tabular MDP and its exact oracles.

``F(theta, alpha) = V(pi_E, r_alpha) - V(pi_theta, r_alpha) - psi(alpha)`` is
evaluated through occupancy measures, so every quantity here is exact up to a
dense linear solve.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import (
    DirectPolicy,
    OccupancyMeasure,
    exact_q,
    exact_visitation,
    greedy_policy,
    policy_table,
    value_iteration,
)

RHO_FLOOR = 1e-6
# Max of |d/du sech(u)^2| = |2 sech^2 tanh|, attained at tanh(u) = 1/sqrt(3).
_SECH2_LIP = 4.0 / (3.0 * math.sqrt(3.0))


def make_features(spec, n_states, n_actions, seed=0):
    """Feature tensor ``phi[s, a, :]`` from ``onehot``, ``random:q`` or ``file:PATH``."""
    kind, _, arg = spec.partition(":")
    if kind == "onehot":
        q = n_states * n_actions
        return np.eye(q).reshape(n_states, n_actions, q)
    if kind == "random":
        try:
            q = int(arg)
        except ValueError:
            raise ValueError(f"invalid feature spec {spec!r}") from None
        if q < 1:
            raise ValueError(f"invalid feature spec {spec!r}")
        rng = np.random.default_rng(seed)
        phi = rng.standard_normal((n_states * n_actions, q))
        phi /= np.abs(phi).max(axis=0, keepdims=True)
        return phi.reshape(n_states, n_actions, q)
    if kind == "file":
        path = Path(arg)
        phi = np.load(path) if path.suffix == ".npy" else np.loadtxt(path)
        phi = np.asarray(phi, dtype=float).reshape(n_states, n_actions, -1)
        return phi
    raise ValueError(f"invalid feature spec {spec!r}")


@dataclass(frozen=True)
class RewardModel:
    """Parameterized reward ``r_alpha`` on the ball ``||alpha|| <= ball_radius``.

    ``kind="linear"`` gives ``r = phi . alpha``. ``kind="bounded-nonlinear"``
    squashes it, ``r = r_max * tanh(phi . alpha / r_max)``, which is smooth and
    bounded and has a nonzero gradient-Lipschitz constant. The regularizer is
    ``psi(alpha) = mu_psi / 2 ||alpha||^2``.
    """

    features: np.ndarray
    ball_radius: float = 5.0
    mu_psi: float = 1.0
    kind: str = "linear"
    r_max: float = 50.0

    def __post_init__(self):
        phi = np.array(self.features, dtype=float)
        if phi.ndim != 3:
            raise ValueError(f"features must have shape (S, A, q), got {phi.shape}")
        phi.setflags(write=False)
        object.__setattr__(self, "features", phi)
        if self.kind not in ("linear", "bounded-nonlinear"):
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.ball_radius <= 0 or self.mu_psi <= 0:
            raise ValueError("ball_radius and mu_psi must be positive")

    @property
    def q(self):
        return self.features.shape[2]

    def _lin(self, alpha):
        return self.features @ np.asarray(alpha, dtype=float)

    def reward(self, alpha):
        z = self._lin(alpha)
        if self.kind == "linear":
            return z
        return self.r_max * np.tanh(z / self.r_max)

    def reward_grad(self, alpha):
        """``grad_alpha r_alpha(s, a)`` as an ``(S, A, q)`` tensor."""
        if self.kind == "linear":
            return self.features
        sech2 = 1.0 / np.cosh(self._lin(alpha) / self.r_max) ** 2
        return sech2[..., None] * self.features

    def psi(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        return 0.5 * self.mu_psi * float(alpha @ alpha)

    def psi_grad(self, alpha):
        return self.mu_psi * np.asarray(alpha, dtype=float)

    @property
    def C_alpha(self):
        return 2.0 * self.ball_radius

    @property
    def C_r(self):
        # sqrt(sum_i ||d r / d alpha_i||_inf^2); sech^2 <= 1 so the linear bound holds for both kinds.
        return float(np.sqrt((np.abs(self.features).max(axis=(0, 1)) ** 2).sum()))

    @property
    def L_r(self):
        if self.kind == "linear":
            return 0.0
        sq = (self.features**2).sum(axis=2).max()
        return float(_SECH2_LIP * sq / self.r_max)

    @property
    def L_psi(self):
        return self.mu_psi

    @property
    def R_max(self):
        if self.kind == "linear":
            return float(self.ball_radius * np.sqrt((self.features**2).sum(axis=2)).max())
        return float(self.r_max)

    def curvature_bound(self, gamma):
        """Bound on the alpha-Hessian of the occupancy term: ``2 L_r / (1 - gamma)``."""
        return 2.0 * self.L_r / (1.0 - gamma)

    def in_ball(self, alpha, atol=1e-12):
        return float(np.linalg.norm(alpha)) <= self.ball_radius + atol


@dataclass(frozen=True)
class GailProblem:
    """MDP, expert policy and reward class, with the expert occupancy cached."""

    mdp: object
    expert: DirectPolicy
    reward_model: RewardModel
    expert_occupancy: OccupancyMeasure = field(default=None)

    def __post_init__(self):
        S, A = self.mdp.n_states, self.mdp.n_actions
        if self.mdp.initial_dist.min() <= 0.0:
            raise ValueError("initial_dist must be strictly positive: the dominance constant would be infinite")
        if self.reward_model.features.shape[:2] != (S, A):
            raise ValueError("feature table does not match the MDP dimensions")
        if policy_table(self.expert).shape != (S, A):
            raise ValueError("expert policy does not match the MDP dimensions")
        occ = exact_visitation(self.mdp, self.expert)
        if self.expert_occupancy is not None:
            if np.abs(self.expert_occupancy.nu - occ.nu).max() > 1e-10:
                raise ValueError("expert_occupancy disagrees with the expert policy")
        object.__setattr__(self, "expert_occupancy", occ)
        if self.mu <= 0:
            raise ValueError(
                "F(theta, .) is not strongly concave for this reward model: raise mu_psi or r_max"
            )

    @property
    def gamma(self):
        return self.mdp.gamma

    @property
    def mu(self):
        """Strong-concavity modulus of ``F(theta, .)`` (exact for the linear kind)."""
        rm = self.reward_model
        return rm.mu_psi - rm.curvature_bound(self.gamma)

    @property
    def L22(self):
        rm = self.reward_model
        return 2.0 * math.sqrt(rm.q) * rm.L_r / (1.0 - self.gamma) + rm.L_psi


def _check_alpha(problem, alpha):
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (problem.reward_model.q,):
        raise ValueError(f"alpha must have shape ({problem.reward_model.q},)")
    if not problem.reward_model.in_ball(alpha, atol=1e-9):
        raise ValueError(f"alpha lies outside the reward ball (norm {np.linalg.norm(alpha):.6g})")
    return alpha


def objective_F(problem, theta, alpha):
    """``F(theta, alpha) = <nu_E - nu_theta, r_alpha> / (1 - gamma) - psi(alpha)``."""
    alpha = _check_alpha(problem, alpha)
    nu = exact_visitation(problem.mdp, theta).nu
    r = problem.reward_model.reward(alpha)
    gap = ((problem.expert_occupancy.nu - nu) * r).sum() / (1.0 - problem.gamma)
    return float(gap - problem.reward_model.psi(alpha))


def grad_alpha_F(problem, theta, alpha, occupancy=None):
    alpha = _check_alpha(problem, alpha)
    nu = occupancy.nu if occupancy is not None else exact_visitation(problem.mdp, theta).nu
    g = problem.reward_model.reward_grad(alpha)
    diff = problem.expert_occupancy.nu - nu
    return np.einsum("sa,saq->q", diff, g) / (1.0 - problem.gamma) - problem.reward_model.psi_grad(alpha)


def grad_theta_F(problem, theta, alpha):
    """``grad_theta F = -d(s) Q(s, a) / (1 - gamma)`` under the direct parameterization."""
    mdp = problem.mdp
    r = problem.reward_model.reward(alpha)
    occ = exact_visitation(mdp, theta)
    qt = exact_q(mdp, theta, r)
    return -occ.d[:, None] * qt.q / (1.0 - mdp.gamma)


def project_ball(v, radius):
    """Euclidean projection onto ``{x : ||x|| <= radius}``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n <= radius:
        return v.copy()
    return v * (radius / n)


def alpha_opt(problem, theta, tol=1e-10, max_iter=200_000, occupancy=None):
    """Unique maximizer ``alpha_op(theta)`` of the strongly concave ``F(theta, .)``."""
    rm = problem.reward_model
    occ = occupancy if occupancy is not None else exact_visitation(problem.mdp, theta)
    if rm.kind == "linear":
        c = np.einsum("sa,saq->q", problem.expert_occupancy.nu - occ.nu, rm.features)
        return project_ball(c / (rm.mu_psi * (1.0 - problem.gamma)), rm.ball_radius)
    step = 1.0 / (rm.L_psi + rm.curvature_bound(problem.gamma) + 1e-12)
    alpha = np.zeros(rm.q)
    for _ in range(max_iter):
        g = grad_alpha_F(problem, theta, alpha, occupancy=occ)
        nxt = project_ball(alpha + step * g, rm.ball_radius)
        if np.linalg.norm(nxt - alpha) / step <= tol:
            return nxt
        alpha = nxt
    raise RuntimeError("alpha_opt did not converge; check the strong-concavity modulus")


def projected_grad_norm(problem, theta, alpha, step=None):
    """Norm of the projected-gradient mapping of ``F(theta, .)`` at ``alpha``."""
    rm = problem.reward_model
    step = step or 1.0 / rm.L_psi
    g = grad_alpha_F(problem, theta, alpha)
    return float(np.linalg.norm(project_ball(alpha + step * g, rm.ball_radius) - alpha) / step)


def marginal_g(problem, theta):
    """``g(theta) = max_alpha F(theta, alpha)``."""
    return objective_F(problem, theta, alpha_opt(problem, theta))


def grad_g(problem, theta):
    """Danskin gradient ``grad g(theta) = grad_theta F(theta, alpha_op(theta))``."""
    return grad_theta_F(problem, theta, alpha_opt(problem, theta))


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ObjectiveConstants:
    L11: float
    L12: float
    L21: float
    L22: float
    C_nu: float
    L_Q: float
    C_d: float
    C_M: float
    rho: float
    mu: float
    eta_ppg: float
    beta_alpha: float

    def as_dict(self):
        return dict(self.__dict__)


def mixing_factor(C_M, rho):
    """``1 + ceil(log_rho C_M^{-1}) + 1 / (1 - rho)``.

    The ceiling counts the steps until ``C_M rho^t <= 1`` and is clamped at 0.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if C_M <= 0:
        raise ValueError(f"C_M must be positive, got {C_M}")
    tau = math.ceil(math.log(1.0 / C_M) / math.log(rho) - 1e-12)
    return 1.0 + max(tau, 0) + 1.0 / (1.0 - rho)


def lipschitz_constants(problem, C_M, rho):
    """Smoothness constants of ``F`` and the stepsizes derived from them."""
    mdp, rm = problem.mdp, problem.reward_model
    g = mdp.gamma
    n_a = mdp.n_actions
    mix = mixing_factor(C_M, rho)
    C_r, C_a = rm.C_r, rm.C_alpha
    L11 = 2.0 * math.sqrt(2.0) * n_a * C_r * C_a * mix / (1.0 - g) ** 2
    L12 = math.sqrt(n_a) * C_r / (1.0 - g) ** 2
    L21 = C_r * math.sqrt(n_a) * mix / (1.0 - g)
    L22 = problem.L22
    C_nu = 0.5 * math.sqrt(n_a) * mix
    L_Q = 2.0 * C_r * C_a * C_nu / (1.0 - g)
    C_d = 1.0 / ((1.0 - g) * mdp.initial_dist.min())
    mu = problem.mu
    return ObjectiveConstants(
        L11=L11, L12=L12, L21=L21, L22=L22, C_nu=C_nu, L_Q=L_Q, C_d=C_d,
        C_M=C_M, rho=rho, mu=mu,
        eta_ppg=1.0 / (L11 + L12 * L21 / mu),
        beta_alpha=mu / (4.0 * L22**2),
    )


def fit_mixing_envelope(kernel, t_max=60, tv_floor=1e-12):
    """Fit ``sup_s TV(K^t(s, .), chi) <= C_M rho^t`` for a row-stochastic kernel.

    rho comes from a log-linear regression of the sup-TV curve; C_M is then
    raised until the envelope dominates every measured point for t = 0..t_max.
    Returns ``(C_M, rho, tv)``.
    """
    K = np.asarray(kernel, dtype=float)
    n = K.shape[0]
    w, vecs = np.linalg.eig(K.T)
    chi = np.real(vecs[:, np.argmin(np.abs(w - 1.0))])
    chi = np.abs(chi) / np.abs(chi).sum()
    tv = np.empty(t_max + 1)
    Kt = np.eye(n)
    for t in range(t_max + 1):
        tv[t] = 0.5 * np.abs(Kt - chi[None, :]).sum(axis=1).max()
        Kt = Kt @ K
    ts = np.arange(t_max + 1)
    keep = (tv > tv_floor) & (ts >= 1)
    if keep.sum() >= 2:
        slope = np.polyfit(ts[keep], np.log(tv[keep]), 1)[0]
        rho = float(np.clip(np.exp(slope), RHO_FLOOR, 1.0))
    elif keep.sum() == 1:
        rho = float(max(tv[keep][0] / max(tv[0], tv_floor), RHO_FLOOR))
    else:
        rho = RHO_FLOOR
    if rho >= 1.0 - 1e-9:
        raise RuntimeError("total variation does not decay: chain is not ergodic")
    mask = tv > tv_floor
    ratios = tv[mask] / rho ** ts[mask].astype(float)
    C_M = float(max(ratios.max(initial=0.0), tv[0], tv_floor))
    return C_M, rho, tv


def mixing_constants(mdp, policies=None, n_random=8, seed=0, t_max=60, mixture=True):
    """Envelope ``(C_M, rho)`` over probe policies for the sampling kernel.

    Probes are the uniform policy plus ``n_random`` seeded random policies,
    unless ``policies`` is given. ``mixture`` selects the restart kernel used for
    sampling (default) or the raw transition kernel.
    """
    if policies is None:
        rng = np.random.default_rng(seed)
        policies = [np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)]
        policies += list(rng.dirichlet(np.ones(mdp.n_actions), size=(n_random, mdp.n_states)))
    P = mdp.mixture_transition() if mixture else mdp.transition
    C_M, rho = 0.0, 0.0
    for pol in policies:
        K = np.einsum("sa,sat->st", policy_table(pol), P)
        c, r, _ = fit_mixing_envelope(K, t_max=t_max)
        C_M, rho = max(C_M, c), max(rho, r)
    return C_M, rho


# ---------------------------------------------------------------------------
# structural checks


def optimal_policy(problem, alpha):
    """``theta_op(alpha)``: maximizer of ``V(pi, r_alpha)``, lowest-index tie-break."""
    q = value_iteration(problem.mdp, problem.reward_model.reward(alpha))
    return DirectPolicy(greedy_policy(q))


def gradient_dominance_check(problem, theta, alpha, C_d=None):
    """Both sides of ``F(theta, a) - F(theta_op(a), a) <= C_d max <theta - bar, grad F>``."""
    C_d = C_d or 1.0 / ((1.0 - problem.gamma) * problem.mdp.initial_dist.min())
    theta_t = policy_table(theta)
    lhs = objective_F(problem, theta_t, alpha) - objective_F(problem, optimal_policy(problem, alpha), alpha)
    grad = grad_theta_F(problem, theta_t, alpha)
    # max over bar of <theta - bar, grad>: bar puts unit mass on argmin_a grad(s, a).
    rhs = C_d * float((theta_t * grad).sum() - grad.min(axis=1).sum())
    return lhs, rhs, bool(lhs <= rhs + 1e-8)


def random_tangent(rng, shape):
    """Unit direction whose rows sum to zero (tangent to the product of simplices)."""
    d = rng.standard_normal(shape)
    d -= d.mean(axis=1, keepdims=True)
    return d / np.linalg.norm(d)


def danskin_check(problem, theta, h=1e-5, n_dirs=8, seed=0):
    """Max deviation between ``<grad g, l>`` and central differences of ``g`` along ``l``."""
    rng = np.random.default_rng(seed)
    theta = policy_table(theta)
    grad = grad_g(problem, theta)
    dev = 0.0
    for _ in range(n_dirs):
        ell = random_tangent(rng, theta.shape)
        # Keep the probes inside the simplex.
        neg = ell < 0
        if np.any(neg):
            hmax = (theta[neg] / -ell[neg]).min()
            step = min(h, 0.5 * hmax)
        else:
            step = h
        fd = (marginal_g(problem, theta + step * ell) - marginal_g(problem, theta - step * ell)) / (2 * step)
        dev = max(dev, abs(fd - float((grad * ell).sum())))
    return dev
