"""Experiment orchestration for the nested reward-ascent / policy-update loop."""

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .mdp import DirectPolicy, SoftmaxPolicy, expert_from_reward, exact_visitation, mdp_from_spec, policy_table
from .objective import (
    GailProblem,
    RewardModel,
    alpha_opt,
    grad_alpha_F,
    grad_theta_F,
    lipschitz_constants,
    make_features,
    mixing_constants,
    objective_F,
    project_ball,
)
from .policy_updates import (
    PolicyUpdateConfig,
    default_beta_w,
    fwpg_step,
    natural_gradient_target,
    npg_diagnostics,
    npg_sa,
    npg_step,
    ppg_step,
    trpo_step,
)
from .reward_ascent import InnerLoopConfig, random_in_ball
from .sampling import (
    EstQStats,
    MarkovChain,
    policy_grad_estimate,
    regularized_q_estimate,
    reward_grad_estimate,
    substream,
)
from .regularized import regularized_g, regularized_optimum

CSV_COLUMNS = ("t", "g_gap", "running_avg_gap", "alpha_dist_sq", "grad_norm", "wall_ms")
MODES = ("sample", "exact-q", "exact-all")


@dataclass(frozen=True)
class ExperimentConfig:
    mdp: str = "random:10,4"
    gamma: float = 0.9
    features: str = "onehot"
    reward_kind: str = "linear"
    mu_psi: float = 1.0
    ball_radius: float = 5.0
    expert_epsilon: float = 0.05
    algorithm: str = "ppg"
    T: int = 100
    K: int = 10
    B: int = 100
    b: int = 100
    lam: float = 0.0
    M: int = 500
    T_c: int = 200
    eta: float = None
    eta_scale: float = 1.0
    beta: float = None
    beta_W: float = None
    alpha_init: str = "random"
    mode: str = "exact-all"
    seed: int = 0
    instance_seed: int = 0
    out: str = None
    timing: bool = False

    def __post_init__(self):
        for name in ("T", "K"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("B", "b", "M", "T_c"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def from_mapping(cls, data):
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError("config file must hold key: value pairs")
        return cls.from_mapping(data)

    def replace(self, **changes):
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass(frozen=True)
class MetricsRow:
    t: int
    g_gap: float
    running_avg_gap: float
    alpha_dist_sq: float
    grad_norm: float
    wall_ms: float


@dataclass
class RunResult:
    metrics: list
    initial_gap: float
    final_gap: float
    slope: float
    constants: dict
    policy: object
    alpha: np.ndarray
    problem: GailProblem
    estq_truncated: int = 0


def build_problem(config):
    """Instance from ``instance_seed``: MDP, features and an expert optimal for a random reward."""
    seed = config.instance_seed
    mdp = mdp_from_spec(config.mdp, seed=seed, gamma=config.gamma)
    rng = substream(seed, "instance")
    true_reward = rng.random((mdp.n_states, mdp.n_actions))
    expert = expert_from_reward(mdp, true_reward, epsilon=config.expert_epsilon)
    phi = make_features(config.features, mdp.n_states, mdp.n_actions, seed=seed)
    rm = RewardModel(phi, ball_radius=config.ball_radius, mu_psi=config.mu_psi, kind=config.reward_kind)
    return GailProblem(mdp, expert, rm)


def exact_gap(problem, theta, occupancy=None):
    """``(g(theta), alpha_op(theta))``; g(theta*) = 0 because the expert is realizable."""
    occ = occupancy or exact_visitation(problem.mdp, theta)
    a = alpha_opt(problem, theta, occupancy=occ)
    return objective_F(problem, theta, a), a


def gap_function(problem, config):
    """Optimality-gap oracle for the run: ``g - 0`` or, for trpo-reg, ``g_lam - min g_lam``."""
    if config.algorithm != "trpo-reg":
        return lambda theta, occ=None: exact_gap(problem, theta, occ)[0]
    g_star, _ = regularized_optimum(problem, config.lam)
    return lambda theta, occ=None: regularized_g(problem, theta, config.lam) - g_star


def _logit_grad(pi, g_direct):
    """Chain rule from the policy table to softmax logits."""
    return pi * (g_direct - (pi * g_direct).sum(axis=1, keepdims=True))


def _fmt(x):
    return repr(float(x))


def estimate_rate_slope(metrics, t_min=0, t_max=None):
    """Least-squares slope of ``log(running_avg_gap)`` against ``log(t + 1)``.

    Rows with non-positive averages are dropped; at least 10 usable rows are
    required.
    """
    t = np.array([m.t if hasattr(m, "t") else m[0] for m in metrics], dtype=float)
    y = np.array([m.running_avg_gap if hasattr(m, "running_avg_gap") else m[1] for m in metrics], dtype=float)
    keep = (t >= t_min) & (y > 0)
    if t_max is not None:
        keep &= t <= t_max
    if keep.sum() < 10:
        raise ValueError(f"need at least 10 rows with positive gaps, have {int(keep.sum())}")
    return float(np.polyfit(np.log(t[keep] + 1.0), np.log(y[keep]), 1)[0])


def read_metrics_csv(path):
    rows = []
    with open(path) as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for r in reader:
            rows.append(MetricsRow(int(r["t"]), *(float(r[c]) for c in CSV_COLUMNS[1:])))
    return rows


class _CsvSink:
    def __init__(self, path):
        self.fh = open(path, "w", newline="") if path else io.StringIO()
        self.fh.write(",".join(CSV_COLUMNS) + "\n")

    def row(self, m):
        self.fh.write(",".join([str(m.t)] + [_fmt(getattr(m, c)) for c in CSV_COLUMNS[1:]]) + "\n")
        self.fh.flush()

    def footer(self, lines):
        for line in lines:
            self.fh.write(f"# {line}\n")
        self.fh.flush()

    def close(self):
        if not isinstance(self.fh, io.StringIO):
            self.fh.close()


def run_experiment(config, problem=None, theta0=None):
    """Run ``T`` outer iterations and return metrics, summary and final iterates.

    Every metric uses exact oracles; only the training updates are sampled,
    according to ``config.mode``.
    """
    problem = problem or build_problem(config)
    mdp, rm = problem.mdp, problem.reward_model
    S, A = mdp.n_states, mdp.n_actions
    C_M, rho = mixing_constants(mdp, seed=config.instance_seed)
    consts = lipschitz_constants(problem, C_M, rho)
    beta = config.beta if config.beta is not None else consts.beta_alpha
    inner_cfg = InnerLoopConfig(K=config.K, B=config.B, beta=beta, init=config.alpha_init)
    upd = PolicyUpdateConfig(
        algorithm=config.algorithm, T=config.T, gamma=mdp.gamma, eta_ppg=consts.eta_ppg,
        lam=config.lam, b=config.b, M=config.M, T_c=config.T_c, beta_W=config.beta_W,
        eta=config.eta, eta_scale=config.eta_scale,
    )
    softmax = config.algorithm == "npg"
    if theta0 is not None:
        theta = theta0
    elif softmax:
        theta = SoftmaxPolicy(np.zeros((S, A)))
    else:
        theta = DirectPolicy.uniform(S, A)

    expert_chain = MarkovChain(mdp, substream(config.seed, "expert-chain"))
    learner_chain = MarkovChain(mdp, substream(config.seed, "learner-chain"))
    estq_rng = substream(config.seed, "estq")
    sa_rng = substream(config.seed, "npg-sa")
    init_rng = substream(config.seed, "alpha-init")
    stats = EstQStats()
    alpha = random_in_ball(init_rng, rm.q, rm.ball_radius)

    sink = _CsvSink(config.out)
    metrics = []
    total = 0.0
    gap_of = gap_function(problem, config)
    g0 = gap_of(theta)
    try:
        for t in range(config.T):
            t_start = time.perf_counter()
            pi = policy_table(theta)
            occ = exact_visitation(mdp, pi)
            # inner loop
            if config.alpha_init == "random" and t > 0:
                alpha = random_in_ball(init_rng, rm.q, rm.ball_radius)
            if config.mode == "exact-all" and rm.kind == "linear":
                # grad_alpha F = c - mu_psi alpha with c fixed while theta is fixed
                c_lin = grad_alpha_F(problem, pi, np.zeros(rm.q), occupancy=occ)
            for _ in range(config.K):
                if config.mode == "exact-all":
                    if rm.kind == "linear":
                        g_a = c_lin - rm.mu_psi * alpha
                    else:
                        g_a = grad_alpha_F(problem, pi, alpha, occupancy=occ)
                else:
                    g_a = reward_grad_estimate(problem, pi, alpha, config.B, expert_chain, learner_chain)
                alpha = project_ball(alpha + beta * g_a, rm.ball_radius)

            a_op = alpha_opt(problem, pi, occupancy=occ)
            gap = gap_of(pi, occ)
            g_direct = grad_theta_F(problem, pi, a_op)
            gnorm = np.linalg.norm(_logit_grad(pi, g_direct) if softmax else g_direct)
            alpha_dist = float(((alpha - a_op) ** 2).sum())

            eta = upd.stepsize(t)
            theta = _policy_update(problem, theta, alpha, eta, upd, config, learner_chain, estq_rng, sa_rng, stats)

            total += gap
            wall = (time.perf_counter() - t_start) * 1e3 if config.timing else 0.0
            row = MetricsRow(t, gap, total / (t + 1), alpha_dist, float(gnorm), wall)
            metrics.append(row)
            sink.row(row)
    except (FloatingPointError, ValueError, RuntimeError) as exc:
        sink.close()
        raise RuntimeError(f"run aborted at outer iteration {len(metrics)}: {exc}") from exc

    final_gap = gap_of(theta) if config.T else g0
    try:
        slope = estimate_rate_slope(metrics, t_min=min(100, config.T // 10))
    except ValueError:
        slope = float("nan")
    table = {
        "L11": consts.L11, "L12": consts.L12, "L21": consts.L21, "L22": consts.L22,
        "C_d": consts.C_d, "C_M": consts.C_M, "rho": consts.rho, "beta": beta,
        "eta": upd.stepsize(0),
    }
    footer = [f"initial_gap={_fmt(g0)}", f"final_gap={_fmt(final_gap)}", f"slope={_fmt(slope)}"]
    footer += [f"{k}={_fmt(v)}" for k, v in table.items()]
    footer.append(f"estq_truncated={stats.truncated}")
    sink.footer(footer)
    sink.close()
    return RunResult(metrics, g0, final_gap, slope, table, theta, alpha, problem, stats.truncated)


def _policy_update(problem, theta, alpha, eta, upd, config, chain, estq_rng, sa_rng, stats):
    mode = config.mode
    algo = upd.algorithm
    if algo in ("ppg", "fwpg"):
        if mode == "exact-all":
            g = grad_theta_F(problem, theta, alpha)
        else:
            est_mode = "exact-q" if mode == "exact-q" else "sample"
            g = policy_grad_estimate(problem, theta, alpha, upd.b, chain, estq_rng, est_mode, stats)
        return ppg_step(theta, eta, g) if algo == "ppg" else fwpg_step(theta, eta, g)
    if algo in ("trpo", "trpo-reg"):
        lam = upd.lam if algo == "trpo-reg" else 0.0
        q_mode = "sample" if mode == "sample" else "exact-q"
        q = regularized_q_estimate(problem, theta, alpha, lam, q_mode, estq_rng, stats)
        return trpo_step(theta, eta, lam, q)
    # npg
    if mode == "exact-all":
        W = natural_gradient_target(problem, theta, alpha, upd.lam)
    else:
        beta_W = upd.beta_W
        if beta_W is None:
            beta_W = default_beta_w(npg_diagnostics(problem, theta, alpha, upd.lam)[0], upd.lam)
        W = npg_sa(problem, theta, alpha, upd.lam, upd.M, upd.T_c, beta_W, chain, sa_rng,
                   mode="exact-q" if mode == "exact-q" else "sample")
    return npg_step(theta, eta, W)


def epsilon_global_check(problem, theta):
    """Both sides of ``max_a [V(pi_E, r_a) - V(pi, r_a)] <= max_ball psi + g(theta)``."""
    rm = problem.reward_model
    gap, _ = exact_gap(problem, theta)
    occ = exact_visitation(problem.mdp, theta)
    diff = problem.expert_occupancy.nu - occ.nu
    if rm.kind == "linear":
        c = np.einsum("sa,saq->q", diff, rm.features) / (1.0 - problem.gamma)
        n = np.linalg.norm(c)
        lhs = rm.ball_radius * n
    else:
        raise NotImplementedError("closed-form check only for the linear reward kind")
    rhs = 0.5 * rm.mu_psi * rm.ball_radius**2 + gap
    return float(lhs), float(rhs)
