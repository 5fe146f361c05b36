"""Nested-loop GAIL with exact oracles on finite tabular MDPs."""

from .estimator import GAILImitator
from .harness import ExperimentConfig, MetricsRow, build_problem, estimate_rate_slope, run_experiment
from .mdp import (
    DirectPolicy,
    OccupancyMeasure,
    QTable,
    SoftmaxPolicy,
    TabularMdp,
    exact_policy_gradient,
    exact_q,
    exact_visitation,
    expert_from_reward,
    gridworld_mdp,
    load_mdp,
    random_mdp,
    save_mdp,
)
from .objective import (
    GailProblem,
    ObjectiveConstants,
    RewardModel,
    alpha_opt,
    danskin_check,
    grad_alpha_F,
    grad_theta_F,
    gradient_dominance_check,
    lipschitz_constants,
    marginal_g,
    mixing_constants,
    objective_F,
)
from .policy_updates import fwpg_step, npg_diagnostics, npg_step, ppg_step, project_simplex, trpo_step
from .reward_ascent import InnerLoopConfig, inner_loop, project_ball
from .sampling import EstQConfig, TrajectoryBuffer, est_q, policy_grad_estimate, regularized_q_estimate, reward_grad_estimate, sample_chain
from .suites import run_property_suite

__version__ = "0.1.0"
