"""Property suites: each check measures both sides of an inequality and reports the slack.

The check functions take their sample sizes as arguments so the acceptance
tests can run them at full size while the CLI suites stay quick.
"""

import math

import numpy as np

from .harness import ExperimentConfig, build_problem
from .mdp import DirectPolicy, SoftmaxPolicy, exact_q, exact_visitation, random_mdp
from .objective import (
    GailProblem,
    RewardModel,
    alpha_opt,
    danskin_check,
    grad_alpha_F,
    grad_g,
    grad_theta_F,
    gradient_dominance_check,
    lipschitz_constants,
    make_features,
    mixing_constants,
    project_ball,
)
from .oracles import simplex_projection_active_set, simplex_projection_bisection
from .policy_updates import natural_gradient_target, npg_diagnostics, npg_sa, project_simplex
from .reward_ascent import InnerLoopConfig, inner_loop, random_in_ball
from .sampling import (
    MarkovChain,
    est_q_batch,
    policy_grad_from_samples,
    reward_grad_from_samples,
    sample_chain,
)

SUITES = ("lipschitz", "dominance", "danskin", "estimators", "inner-loop", "npg-sa", "projections")


def _entry(name, measured, bound, passed=None, **extra):
    passed = bool(measured <= bound) if passed is None else bool(passed)
    return {"check": name, "passed": passed, "measured": float(measured), "bound": float(bound),
            "slack": float(bound - measured), **extra}


def random_policy(rng, S, A):
    return rng.dirichlet(np.ones(A), size=S)


def small_problem(seed, n_states=5, n_actions=3, gamma=0.9, features="onehot", radius=5.0, mu_psi=1.0):
    """Seeded instance with an expert drawn as a random interior policy."""
    mdp = random_mdp(n_states, n_actions, seed, gamma=gamma)
    rng = np.random.default_rng([seed, 99])
    expert = random_policy(rng, n_states, n_actions)
    phi = make_features(features, n_states, n_actions, seed=seed)
    return GailProblem(mdp, DirectPolicy(expert), RewardModel(phi, ball_radius=radius, mu_psi=mu_psi))


def _random_alpha(rng, problem):
    rm = problem.reward_model
    return random_in_ball(rng, rm.q, rm.ball_radius)


# ---------------------------------------------------------------------------
# structural inequalities


def check_lipschitz(problem, seed, n_tuples=200, n_pairs=100):
    rng = np.random.default_rng(seed)
    mdp = problem.mdp
    S, A = mdp.n_states, mdp.n_actions
    C_M, rho = mixing_constants(mdp, seed=seed)
    c = lipschitz_constants(problem, C_M, rho)
    worst_t, worst_a = -np.inf, -np.inf
    for _ in range(n_tuples):
        t1, t2 = random_policy(rng, S, A), random_policy(rng, S, A)
        a1, a2 = _random_alpha(rng, problem), _random_alpha(rng, problem)
        dt, da = np.linalg.norm(t1 - t2), np.linalg.norm(a1 - a2)
        lhs = np.linalg.norm(grad_theta_F(problem, t1, a1) - grad_theta_F(problem, t2, a2))
        worst_t = max(worst_t, lhs - (c.L11 * dt + c.L12 * da))
        lhs = np.linalg.norm(grad_alpha_F(problem, t1, a1) - grad_alpha_F(problem, t2, a2))
        worst_a = max(worst_a, lhs - (c.L21 * dt + c.L22 * da))
    out = [
        _entry("theta-gradient Lipschitz (L11, L12)", worst_t, 0.0, tuples=n_tuples),
        _entry("alpha-gradient Lipschitz (L21, L22)", worst_a, 0.0, tuples=n_tuples),
    ]
    worst_op, worst_nu, worst_q = -np.inf, -np.inf, -np.inf
    for _ in range(n_pairs):
        t1, t2 = random_policy(rng, S, A), random_policy(rng, S, A)
        dt = np.linalg.norm(t1 - t2)
        diff = np.linalg.norm(alpha_opt(problem, t1) - alpha_opt(problem, t2))
        worst_op = max(worst_op, diff - c.L21 / c.mu * dt)
        tv = 0.5 * np.abs(exact_visitation(mdp, t1).nu - exact_visitation(mdp, t2).nu).sum()
        worst_nu = max(worst_nu, tv - c.C_nu * dt)
        a = _random_alpha(rng, problem)
        r = problem.reward_model.reward(a)
        dq = np.abs(exact_q(mdp, t1, r).q - exact_q(mdp, t2, r).q).max()
        worst_q = max(worst_q, dq - c.L_Q * dt)
    out += [
        _entry("alpha_op Lipschitz (L21/mu)", worst_op, 0.0, pairs=n_pairs),
        _entry("visitation TV Lipschitz (C_nu)", worst_nu, 0.0, pairs=n_pairs),
        _entry("Q Lipschitz (L_Q)", worst_q, 0.0, pairs=n_pairs),
    ]
    return out


def check_dominance(problem, seed, n_instances=100):
    rng = np.random.default_rng(seed)
    S, A = problem.mdp.n_states, problem.mdp.n_actions
    held, worst = 0, -np.inf
    for _ in range(n_instances):
        lhs, rhs, ok = gradient_dominance_check(problem, random_policy(rng, S, A), _random_alpha(rng, problem))
        held += ok
        worst = max(worst, lhs - rhs)
    return [_entry("gradient dominance", worst, 1e-8, passed=held == n_instances, held=held, total=n_instances)]


def check_danskin(problem, seed, n_points=5, n_lip_pairs=20):
    rng = np.random.default_rng(seed)
    S, A = problem.mdp.n_states, problem.mdp.n_actions
    dev = max(danskin_check(problem, random_policy(rng, S, A), seed=seed + i) for i in range(n_points))
    dev = max(dev, danskin_check(problem, problem.expert, seed=seed))
    C_M, rho = mixing_constants(problem.mdp, seed=seed)
    c = lipschitz_constants(problem, C_M, rho)
    L = c.L11 + c.L12 * c.L21 / c.mu
    worst = -np.inf
    for _ in range(n_lip_pairs):
        t1, t2 = random_policy(rng, S, A), random_policy(rng, S, A)
        worst = max(worst, np.linalg.norm(grad_g(problem, t1) - grad_g(problem, t2)) - L * np.linalg.norm(t1 - t2))
    return [
        _entry("Danskin finite-difference deviation", dev, 1e-4),
        _entry("grad g Lipschitz", worst, 0.0, pairs=n_lip_pairs),
    ]


def check_projections(seed, n_vectors=1000, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_vectors):
        n = int(rng.integers(2, 7))
        v = rng.normal(scale=float(rng.choice([0.1, 1.0, 5.0])), size=n)
        fast = project_simplex(v)
        ref = simplex_projection_active_set(v)
        worst = max(worst, np.abs(fast - ref).max())
    big = 0.0
    for _ in range(100):
        v = rng.normal(size=50)
        big = max(big, np.abs(project_simplex(v) - simplex_projection_bisection(v)).max())
    return [
        _entry("simplex projection vs active-set QP", worst, tol, vectors=n_vectors),
        _entry("simplex projection vs threshold bisection (n=50)", big, tol, vectors=100),
    ]


# ---------------------------------------------------------------------------
# estimators


def estq_unbiasedness(seed, n_pairs=10, n_draws=100_000):
    """Per-pair ``(|mean - Q|, 3 se)`` for EstQ on a seeded 5-state 3-action MDP."""
    mdp = random_mdp(5, 3, seed, gamma=0.9)
    rng = np.random.default_rng([seed, 1])
    pi = random_policy(rng, 5, 3)
    reward = rng.random((5, 3))
    q = exact_q(mdp, pi, reward).q
    rows = []
    for _ in range(n_pairs):
        s, a = int(rng.integers(5)), int(rng.integers(3))
        draws = est_q_batch(mdp, pi, np.full(n_draws, s), np.full(n_draws, a), reward, rng)
        err = abs(draws.mean() - q[s, a])
        rows.append((s, a, err, 3.0 * draws.std(ddof=1) / math.sqrt(n_draws)))
    return rows


def reward_grad_mse(problem, theta, alpha, B, n_reps, seed):
    """Mean squared error of the Markovian reward-gradient estimate along persistent chains."""
    exact = grad_alpha_F(problem, theta, alpha)
    ce = MarkovChain(problem.mdp, np.random.default_rng([seed, B, 0]))
    cl = MarkovChain(problem.mdp, np.random.default_rng([seed, B, 1]))
    err = np.empty(n_reps)
    for i in range(n_reps):
        est = reward_grad_from_samples(problem, alpha, ce.sample(problem.expert, B), cl.sample(theta, B))
        err[i] = ((est - exact) ** 2).sum()
    return float(err.mean())


def policy_grad_mse(problem, theta, alpha, b, n_reps, seed):
    exact = grad_theta_F(problem, theta, alpha)
    chain = MarkovChain(problem.mdp, np.random.default_rng([seed, b, 2]))
    rng = np.random.default_rng([seed, b, 3])
    err = np.empty(n_reps)
    for i in range(n_reps):
        est = policy_grad_from_samples(problem, theta, alpha, chain.sample(theta, b).states, rng)
        err[i] = ((est - exact) ** 2).sum()
    return float(err.mean())


def check_estimators(seed, n_draws=20_000, n_reps=300):
    out = []
    rows = estq_unbiasedness(seed, n_pairs=5, n_draws=n_draws)
    worst = max(err - bound for *_, err, bound in rows)
    out.append(_entry("EstQ unbiasedness (|mean - Q| - 3 se)", worst, 0.0, pairs=len(rows)))
    problem = small_problem(seed)
    rng = np.random.default_rng([seed, 2])
    theta = random_policy(rng, 5, 3)
    alpha = _random_alpha(rng, problem)
    r1, r4 = (reward_grad_mse(problem, theta, alpha, B, n_reps, seed) for B in (100, 400))
    out.append(_entry("reward-gradient MSE ratio (B=400 / B=100)", r4 / r1, 0.35))
    p1, p4 = (policy_grad_mse(problem, theta, alpha, b, n_reps, seed) for b in (100, 400))
    out.append(_entry("policy-gradient MSE ratio (b=400 / b=100)", p4 / p1, 0.35))
    # persistence: two length-B queries equal one length-2B query on a shared seed
    mdp = problem.mdp
    g = np.random.default_rng(seed)
    first = sample_chain(mdp, theta, 50, g)
    second = sample_chain(mdp, theta, 50, g, first)
    whole = sample_chain(mdp, theta, 100, np.random.default_rng(seed))
    same = np.array_equal(np.r_[first.states, second.states], whole.states) and np.array_equal(
        np.r_[first.actions, second.actions], whole.actions)
    out.append(_entry("chain persistence (2 x B == 2B)", 0.0 if same else 1.0, 0.0))
    return out


# ---------------------------------------------------------------------------
# inner loop


def inner_loop_bound_terms(problem, K, B, C_M, rho):
    rm = problem.reward_model
    g = problem.gamma
    mu, L22 = problem.mu, problem.L22
    decay = rm.C_alpha**2 * math.exp(-(mu**2) * K / (8.0 * L22**2))
    floor = 48.0 * rm.C_r**2 / (mu**2 * (1.0 - g) ** 2) * (1.0 + C_M / (1.0 - rho)) / B
    return decay, floor


def inner_loop_distances(problem, theta, Ks, B, n_reps, seed, beta=None):
    """Mean ``||alpha_K - alpha_op||^2`` over replications, at each K in ``Ks``."""
    beta = beta or problem.mu / (4.0 * problem.L22**2)
    K_max = max(Ks)
    cfg = InnerLoopConfig(K=K_max, B=B, beta=beta)
    acc = np.zeros(K_max + 1)
    for rep in range(n_reps):
        rng = np.random.default_rng([seed, B, rep])
        chains = (MarkovChain(problem.mdp, np.random.default_rng([seed, B, rep, 0])),
                  MarkovChain(problem.mdp, np.random.default_rng([seed, B, rep, 1])))
        a0 = random_in_ball(rng, problem.reward_model.q, problem.reward_model.ball_radius)
        _, diag = inner_loop(problem, theta, cfg, a0, chains, mode="sample", track=True)
        acc += np.asarray(diag.alpha_dist_sq)
    acc /= n_reps
    return {K: float(acc[K]) for K in Ks}


def check_inner_loop(seed, Ks=(10, 50, 200), Bs=(100, 400), n_reps=20, problem=None):
    problem = problem or build_problem(ExperimentConfig(instance_seed=seed))
    rng = np.random.default_rng([seed, 7])
    theta = random_policy(rng, problem.mdp.n_states, problem.mdp.n_actions)
    # envelope over the default probes plus the two policies the chains run under
    S, A = problem.mdp.n_states, problem.mdp.n_actions
    probes = [np.full((S, A), 1.0 / A), problem.expert, theta]
    probes += list(np.random.default_rng(seed).dirichlet(np.ones(A), size=(8, S)))
    C_M, rho = mixing_constants(problem.mdp, policies=probes)
    out = []
    for B in Bs:
        dist = inner_loop_distances(problem, theta, Ks, B, n_reps, seed)
        for K in Ks:
            decay, floor = inner_loop_bound_terms(problem, K, B, C_M, rho)
            out.append(_entry(f"inner-loop distance K={K} B={B}", dist[K], decay + floor, reps=n_reps))
    return out


# ---------------------------------------------------------------------------
# natural gradient


def softmax_instance(seed, n_states=5, n_actions=3):
    """5-state softmax probe: random logits and a reward parameter inside the ball."""
    problem = small_problem(seed, n_states, n_actions)
    rng = np.random.default_rng([seed, 11])
    theta = SoftmaxPolicy(rng.normal(scale=0.5, size=(n_states, n_actions)))
    alpha = project_ball(rng.normal(scale=0.3, size=problem.reward_model.q), problem.reward_model.ball_radius)
    return problem, theta, alpha


def npg_sa_error(seed, lam=1e-3, M=500, T_c=200, beta_W=0.5, mode="exact-q"):
    """``(max |W_SA - W_target|, W_target)`` for one SA run on the softmax probe."""
    problem, theta, alpha = softmax_instance(seed)
    target = natural_gradient_target(problem, theta, alpha, lam)
    chain = MarkovChain(problem.mdp, np.random.default_rng([seed, 12]))
    W = npg_sa(problem, theta, alpha, lam, M, T_c, beta_W, chain, np.random.default_rng([seed, 13]), mode=mode)
    return float(np.abs(W - target).max()), target


def check_npg_sa(seed, lam=1e-3, M=500, T_c=200, beta_W=0.5):
    problem, theta, alpha = softmax_instance(seed)
    lambda_P, zeta_p = npg_diagnostics(problem, theta, alpha, lam)
    err, _ = npg_sa_error(seed, lam, M, T_c, beta_W)
    return [
        _entry("compatible approximation residual zeta'", zeta_p, 1e-6),
        _entry("lambda_P >= lambda", lam - lambda_P, 1e-12),
        _entry("SA limit vs dense natural gradient (max abs)", err, 1e-3, M=M, T_c=T_c),
    ]


def run_property_suite(name, seed=0):
    """Run one named suite and return a machine-readable report."""
    if not name or name not in SUITES:
        raise ValueError(f"suite name must be one of {', '.join(SUITES)}")
    if name == "lipschitz":
        checks = check_lipschitz(small_problem(seed, 4, 3), seed)
    elif name == "dominance":
        checks = check_dominance(small_problem(seed, 5, 3), seed)
    elif name == "danskin":
        checks = check_danskin(small_problem(seed, 4, 3), seed)
    elif name == "estimators":
        checks = check_estimators(seed)
    elif name == "inner-loop":
        checks = check_inner_loop(seed)
    elif name == "npg-sa":
        checks = check_npg_sa(seed)
    else:
        checks = check_projections(seed)
    return {"suite": name, "seed": seed, "passed": all(c["passed"] for c in checks), "checks": checks}
