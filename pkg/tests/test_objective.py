import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem, random_policy
from tabgail.harness import epsilon_global_check
from tabgail.mdp import DirectPolicy, TabularMdp, exact_visitation, random_mdp
from tabgail.objective import (
    GailProblem,
    RewardModel,
    alpha_opt,
    danskin_check,
    fit_mixing_envelope,
    grad_alpha_F,
    gradient_dominance_check,
    lipschitz_constants,
    make_features,
    marginal_g,
    mixing_constants,
    mixing_factor,
    objective_F,
    optimal_policy,
    project_ball,
    projected_grad_norm,
)
from tabgail.oracles import monte_carlo_value
from tabgail.reward_ascent import random_in_ball
from tabgail.suites import check_danskin, check_dominance, check_lipschitz


def test_objective_zero_at_expert_and_zero_alpha(problem, rng):
    q = problem.reward_model.q
    assert objective_F(problem, problem.expert, np.zeros(q)) == 0.0
    assert objective_F(problem, random_policy(rng, 5, 3), np.zeros(q)) == 0.0


def test_objective_matches_monte_carlo():
    mdp = random_mdp(2, 2, seed=3, gamma=0.8)
    expert = DirectPolicy([[0.9, 0.1], [0.2, 0.8]])
    theta = np.array([[0.3, 0.7], [0.6, 0.4]])
    prob = GailProblem(mdp, expert, RewardModel(make_features("onehot", 2, 2), mu_psi=1.0))
    alpha = np.array([1.0, -0.5, 0.25, 2.0])
    r = prob.reward_model.reward(alpha)
    rng = np.random.default_rng(0)
    ve, se_e = monte_carlo_value(mdp, expert.table, r, 200_000, rng)
    vt, se_t = monte_carlo_value(mdp, theta, r, 200_000, rng)
    mc = ve - vt - prob.reward_model.psi(alpha)
    assert abs(objective_F(prob, theta, alpha) - mc) <= 3 * np.hypot(se_e, se_t)


def test_alpha_gradient_identities(problem, rng):
    rm = problem.reward_model
    alpha = random_in_ball(rng, rm.q, rm.ball_radius)
    np.testing.assert_allclose(grad_alpha_F(problem, problem.expert, alpha), -rm.mu_psi * alpha, atol=1e-12)
    theta = random_policy(rng, 5, 3)
    nu = exact_visitation(problem.mdp, theta).nu
    Phi = rm.features.reshape(15, rm.q)
    expect = Phi.T @ (problem.expert_occupancy.nu - nu).ravel() / 0.1 - rm.mu_psi * alpha
    np.testing.assert_allclose(grad_alpha_F(problem, theta, alpha), expect, atol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "bounded-nonlinear"])
def test_alpha_gradient_finite_difference(kind, rng):
    prob = make_problem(seed=2, features="random:4", kind=kind, r_max=2.0, mu_psi=30.0)
    theta = random_policy(rng, 5, 3)
    alpha = random_in_ball(rng, 4, 2.0)
    g = grad_alpha_F(prob, theta, alpha)
    h = 1e-6
    for i in range(4):
        e = np.eye(4)[i]
        fd = (objective_F(prob, theta, alpha + h * e) - objective_F(prob, theta, alpha - h * e)) / (2 * h)
        assert abs(fd - g[i]) <= 1e-6


def test_alpha_opt_expert_and_closed_form(rng):
    prob = make_problem(seed=1, radius=1e3)
    np.testing.assert_allclose(alpha_opt(prob, prob.expert), 0.0, atol=1e-12)
    theta = random_policy(rng, 5, 3)
    a = alpha_opt(prob, theta)
    # interior maximizer: first-order condition grad = 0
    assert np.abs(grad_alpha_F(prob, theta, a)).max() <= 1e-9
    g = marginal_g(prob, theta)
    c = prob.reward_model.features.reshape(15, -1).T @ (prob.expert_occupancy.nu - exact_visitation(prob.mdp, theta).nu).ravel()
    assert g == pytest.approx(c @ c / (2 * 1.0 * 0.1**2), rel=1e-10)


def test_alpha_opt_on_the_boundary(rng):
    prob = make_problem(seed=1, radius=0.05)
    theta = random_policy(rng, 5, 3)
    a = alpha_opt(prob, theta)
    assert np.linalg.norm(a) == pytest.approx(0.05)
    assert projected_grad_norm(prob, theta, a) <= 1e-10


def test_nonlinear_alpha_opt_is_stationary(rng):
    prob = make_problem(seed=4, features="random:3", kind="bounded-nonlinear", r_max=2.0, mu_psi=30.0)
    theta = random_policy(rng, 5, 3)
    a = alpha_opt(prob, theta, tol=1e-10)
    assert projected_grad_norm(prob, theta, a, step=1.0 / (prob.L22)) <= 1e-9


def test_marginal_dominates_random_probes(problem, rng):
    theta = random_policy(rng, 5, 3)
    g = marginal_g(problem, theta)
    rm = problem.reward_model
    assert g >= 0.0
    for _ in range(50):
        assert g >= objective_F(problem, theta, random_in_ball(rng, rm.q, rm.ball_radius)) - 1e-12


def test_alpha_outside_ball_rejected(problem):
    with pytest.raises(ValueError):
        objective_F(problem, problem.expert, np.full(problem.reward_model.q, 10.0))


def test_zero_start_mass_rejected_by_problem():
    P = np.full((2, 1, 2), 0.5)
    mdp = TabularMdp(P, [1.0, 0.0], 0.9, full_support=False)
    with pytest.raises(ValueError):
        GailProblem(mdp, DirectPolicy(np.ones((2, 1))), RewardModel(make_features("onehot", 2, 1)))


def test_weak_concavity_rejected():
    with pytest.raises(ValueError):
        make_problem(seed=0, kind="bounded-nonlinear", r_max=0.01, mu_psi=1.0)


def test_constant_plugins():
    # |A| = 4, C_r = 1 (one constant feature), gamma = 0.5
    mdp = random_mdp(3, 4, seed=0, gamma=0.5)
    prob = GailProblem(mdp, DirectPolicy.uniform(3, 4), RewardModel(np.ones((3, 4, 1)), mu_psi=2.5))
    c = lipschitz_constants(prob, C_M=2.0, rho=0.5)
    assert c.L12 == pytest.approx(8.0)
    assert c.L22 == pytest.approx(2.5)
    assert c.beta_alpha == pytest.approx(c.mu / (4 * c.L22**2))
    assert c.eta_ppg == pytest.approx(1 / (c.L11 + c.L12 * c.L21 / c.mu))
    mdp10 = random_mdp(10, 2, seed=0, gamma=0.9)
    prob10 = GailProblem(mdp10, DirectPolicy.uniform(10, 2), RewardModel(make_features("onehot", 10, 2)))
    assert lipschitz_constants(prob10, 2.0, 0.5).C_d == pytest.approx(100.0)


def test_mixing_factor_values_and_errors():
    # C_M = 4, rho = 1/2: two steps until 4 * 2^-t <= 1
    assert mixing_factor(4.0, 0.5) == pytest.approx(1 + 2 + 2)
    # C_M < 1 needs no burn-in steps
    assert mixing_factor(0.5, 0.5) == pytest.approx(1 + 0 + 2)
    for bad in [(1.0, 1.0), (1.0, 0.0), (0.0, 0.5)]:
        with pytest.raises(ValueError):
            mixing_factor(*bad)


def test_mixing_identical_rows_hits_floor():
    K = np.tile([0.2, 0.5, 0.3], (3, 1))
    C_M, rho, tv = fit_mixing_envelope(K)
    assert rho == 1e-6
    assert tv[1] <= 1e-15


@pytest.mark.parametrize("p", [0.1, 0.3, 0.45])
def test_mixing_two_state_flip(p):
    K = np.array([[1 - p, p], [p, 1 - p]])
    C_M, rho, tv = fit_mixing_envelope(K)
    assert abs(rho - abs(1 - 2 * p)) <= 0.05
    t = np.arange(tv.size)
    # round-off TV below the 1e-12 fit floor is not part of the envelope contract
    assert np.all((C_M * rho**t >= tv) | (tv <= 1e-12))


def test_mixing_envelope_dominates_on_random_mdp():
    mdp = random_mdp(6, 3, seed=0, gamma=0.9)
    C_M, rho = mixing_constants(mdp, seed=0)
    pi = np.random.default_rng(1).dirichlet(np.ones(3), size=6)
    K = np.einsum("sa,sat->st", pi, mdp.mixture_transition())
    c, r, tv = fit_mixing_envelope(K)
    t = np.arange(tv.size)
    assert np.all((c * r**t >= tv) | (tv <= 1e-12))
    assert 0 < rho < 1 and C_M > 0


def test_dominance_fixed_points(problem, rng):
    alpha = random_in_ball(rng, problem.reward_model.q, 5.0)
    lhs, rhs, ok = gradient_dominance_check(problem, optimal_policy(problem, alpha), alpha)
    assert abs(lhs) <= 1e-9 and rhs >= -1e-9 and ok
    lhs, _, ok = gradient_dominance_check(problem, np.full((5, 3), 1 / 3), np.zeros(problem.reward_model.q))
    assert lhs == 0.0 and ok


def test_dominance_suite_holds_on_100_instances():
    (entry,) = check_dominance(make_problem(seed=5), seed=5)
    assert entry["held"] == 100


def test_danskin_deviation_small():
    prob = make_problem(seed=3, n_states=4)
    rng = np.random.default_rng(3)
    assert danskin_check(prob, random_policy(rng, 4, 3)) <= 1e-4
    assert danskin_check(prob, prob.expert) <= 1e-4
    assert all(e["passed"] for e in check_danskin(prob, seed=3, n_points=2, n_lip_pairs=10))


def test_lipschitz_audit_passes():
    report = check_lipschitz(make_problem(seed=6, n_states=4), seed=6, n_tuples=50, n_pairs=30)
    assert all(e["passed"] for e in report), report


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000), t=st.floats(0.0, 1.0))
def test_strong_concavity_in_alpha(seed, t):
    for kind, kw in (("linear", {}), ("bounded-nonlinear", {"r_max": 2.0, "mu_psi": 30.0, "features": "random:3"})):
        prob = make_problem(seed=seed % 7, kind=kind, **kw)
        rng = np.random.default_rng(seed)
        rm = prob.reward_model
        theta = random_policy(rng, 5, 3)
        a1, a2 = random_in_ball(rng, rm.q, rm.ball_radius), random_in_ball(rng, rm.q, rm.ball_radius)
        mid = objective_F(prob, theta, t * a1 + (1 - t) * a2)
        chord = t * objective_F(prob, theta, a1) + (1 - t) * objective_F(prob, theta, a2)
        assert mid >= chord + prob.mu * t * (1 - t) * np.sum((a1 - a2) ** 2) / 2 - 1e-9


def test_nonlinear_reward_constants_hold(rng):
    prob = make_problem(seed=2, features="random:3", kind="bounded-nonlinear", r_max=2.0, mu_psi=30.0)
    rm = prob.reward_model
    assert rm.L_r > 0
    for _ in range(50):
        a1, a2 = random_in_ball(rng, 3, 5.0), random_in_ball(rng, 3, 5.0)
        g1, g2 = rm.reward_grad(a1), rm.reward_grad(a2)
        assert np.sqrt((np.abs(g1).max(axis=(0, 1)) ** 2).sum()) <= rm.C_r + 1e-12
        assert np.linalg.norm(g1 - g2, axis=2).max() <= rm.L_r * np.linalg.norm(a1 - a2) + 1e-12
        assert np.abs(rm.reward(a1)).max() <= rm.R_max


def test_epsilon_global_implication(problem, rng):
    for _ in range(20):
        lhs, rhs = epsilon_global_check(problem, random_policy(rng, 5, 3))
        assert lhs <= rhs + 1e-6


def test_feature_specs(tmp_path):
    phi = make_features("random:6", 4, 2, seed=1)
    assert phi.shape == (4, 2, 6)
    np.testing.assert_allclose(np.abs(phi).max(axis=(0, 1)), 1.0)
    path = tmp_path / "phi.npy"
    np.save(path, phi)
    np.testing.assert_array_equal(make_features(f"file:{path}", 4, 2), phi)
    for bad in ("random:0", "random:x", "poly:3"):
        with pytest.raises(ValueError):
            make_features(bad, 4, 2)


def test_project_ball_basics():
    np.testing.assert_allclose(project_ball([3.0, 4.0], 1.0), [0.6, 0.8])
    np.testing.assert_allclose(project_ball([0.1, 0.2], 1.0), [0.1, 0.2])
    with pytest.raises(ValueError):
        project_ball([1.0], 0.0)
