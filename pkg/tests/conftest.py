import numpy as np
import pytest

from tabgail.mdp import DirectPolicy, TabularMdp, random_mdp
from tabgail.objective import GailProblem, RewardModel, make_features


def swap_chain(gamma=0.5, zeta=(1.0, 0.0)):
    """Two states, one action, deterministic swap."""
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return TabularMdp(P, np.asarray(zeta), gamma, full_support=False)


def one_state(gamma=0.5, n_actions=1):
    return TabularMdp(np.ones((1, n_actions, 1)), [1.0], gamma)


def make_problem(seed=0, n_states=5, n_actions=3, gamma=0.9, features="onehot", radius=5.0, mu_psi=1.0,
                 kind="linear", r_max=50.0):
    mdp = random_mdp(n_states, n_actions, seed, gamma=gamma)
    rng = np.random.default_rng([seed, 99])
    expert = DirectPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))
    phi = make_features(features, n_states, n_actions, seed=seed)
    rm = RewardModel(phi, ball_radius=radius, mu_psi=mu_psi, kind=kind, r_max=r_max)
    return GailProblem(mdp, expert, rm)


def random_policy(rng, S, A):
    return rng.dirichlet(np.ones(A), size=S)


@pytest.fixture
def problem():
    return make_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
