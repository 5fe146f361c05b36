"""Inner loop: K steps of projected stochastic gradient ascent on the reward parameter."""

from dataclasses import dataclass, field

import numpy as np

from .objective import alpha_opt, grad_alpha_F, project_ball
from .sampling import reward_grad_estimate

__all__ = ["InnerLoopConfig", "InnerLoopDiagnostics", "inner_loop", "project_ball", "random_in_ball"]


@dataclass(frozen=True)
class InnerLoopConfig:
    """``K`` ascent steps on length-``B`` minibatches with stepsize ``beta``.

    ``init="random"`` draws alpha_0 uniformly from the ball each outer
    iteration; ``"warm"`` starts from the previous alpha.
    """

    K: int
    B: int
    beta: float
    init: str = "random"

    def __post_init__(self):
        if self.K < 0 or self.B < 1:
            raise ValueError("inner loop needs K >= 0 and B >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.init not in ("random", "warm"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class InnerLoopDiagnostics:
    alpha_dist_sq: list = field(default_factory=list)
    grad_est_norm: list = field(default_factory=list)
    beta: float = 0.0


def random_in_ball(rng, dim, radius):
    """Uniform draw from the Euclidean ball of the given radius."""
    d = rng.standard_normal(dim)
    d /= np.linalg.norm(d)
    return radius * rng.random() ** (1.0 / dim) * d


def inner_loop(problem, theta, config, alpha0, chains=None, mode="sample", track=False):
    """Run ``alpha_{k+1} = P_ball(alpha_k + beta * grad_hat)`` for ``K`` steps.

    ``chains`` is the ``(expert, learner)`` pair of persistent Markov chains,
    required in ``sample`` mode. ``mode="exact"`` uses the exact alpha-gradient.
    With ``track`` the squared distance to the exact maximizer is recorded
    after every step (index 0 is the starting point).
    """
    rm = problem.reward_model
    alpha = project_ball(np.asarray(alpha0, dtype=float), rm.ball_radius)
    diag = InnerLoopDiagnostics(beta=config.beta)
    target = alpha_opt(problem, theta) if track else None
    if track:
        diag.alpha_dist_sq.append(float(((alpha - target) ** 2).sum()))
    for _ in range(config.K):
        if mode == "exact":
            g = grad_alpha_F(problem, theta, alpha)
        elif mode == "sample":
            g = reward_grad_estimate(problem, theta, alpha, config.B, *chains)
        else:
            raise ValueError(f"unknown inner-loop mode {mode!r}")
        alpha = project_ball(alpha + config.beta * g, rm.ball_radius)
        diag.grad_est_norm.append(float(np.linalg.norm(g)))
        if track:
            diag.alpha_dist_sq.append(float(((alpha - target) ** 2).sum()))
    return alpha, diag
