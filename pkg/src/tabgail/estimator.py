"""scikit-learn style wrapper around the nested-loop trainer."""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .harness import ExperimentConfig, exact_gap, run_experiment
from .mdp import policy_table
from .objective import GailProblem


class GAILImitator(BaseEstimator):
    """Learn a policy whose occupancy matches an expert's on a known tabular MDP.

    ``fit`` takes a :class:`GailProblem`; hyperparameters mirror
    :class:`ExperimentConfig`. After fitting, ``policy_`` holds the action
    table, ``alpha_`` the last reward parameter and ``metrics_`` the per
    iteration rows.
    """

    def __init__(self, algorithm="ppg", T=200, K=10, B=100, b=100, lam=0.0, M=500, T_c=200,
                 eta=None, eta_scale=1.0, beta=None, beta_W=None, alpha_init="random",
                 mode="exact-all", seed=0):
        self.algorithm = algorithm
        self.T = T
        self.K = K
        self.B = B
        self.b = b
        self.lam = lam
        self.M = M
        self.T_c = T_c
        self.eta = eta
        self.eta_scale = eta_scale
        self.beta = beta
        self.beta_W = beta_W
        self.alpha_init = alpha_init
        self.mode = mode
        self.seed = seed

    def fit(self, problem, y=None):
        if not isinstance(problem, GailProblem):
            raise TypeError("fit expects a GailProblem")
        names = {f.name for f in dataclasses.fields(ExperimentConfig)}
        cfg = ExperimentConfig(**{k: v for k, v in self.get_params().items() if k in names})
        res = run_experiment(cfg, problem=problem)
        self.problem_ = problem
        self.policy_ = policy_table(res.policy)
        self.theta_ = res.policy
        self.alpha_ = res.alpha
        self.metrics_ = res.metrics
        self.constants_ = res.constants
        self.n_states_, self.n_actions_ = self.policy_.shape
        return self

    def _states(self, states):
        check_is_fitted(self, "policy_")
        s = np.asarray(states)
        if s.ndim != 1 or not np.issubdtype(s.dtype, np.integer):
            raise ValueError("states must be a 1-D integer array")
        if s.size and (s.min() < 0 or s.max() >= self.n_states_):
            raise ValueError("state index out of range")
        return s

    def predict_proba(self, states):
        s = self._states(states)
        return self.policy_[s]

    def predict(self, states):
        """Most likely action per state, lowest index on ties."""
        return self.predict_proba(states).argmax(axis=1)

    def score(self, problem=None, y=None):
        """Negative imitation gap ``-g(policy)``; zero means the expert is matched."""
        check_is_fitted(self, "policy_")
        return -exact_gap(problem or self.problem_, self.policy_)[0]
