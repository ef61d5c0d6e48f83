"""Interleaved reward design and policy learning, fixed-reward baselines,
the greedy-learner convergence experiment and run comparison."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .designer import RewardDesigner
from .envs import FeatureMap
from .informativeness import InformativenessContext, bangbang_design
from .learners import (LearnerConfig, ReplayBuffer, SoftmaxPolicy, greedy_update,
                       reinforce_update, simple_pg_update, softmax)
from .mdp import (Sampler, TabularMdp, argmax_sets, check_policy, finite_horizon_return,
                  occupancy, optimal_values, policy_eval, trajectory_return, uniform_policy)

TECHNIQUES = ("adaptive", "orig", "invar", "external")
STREAMS = {"rollout": 0, "eval": 1, "learner": 2}


class DesignFailure(RuntimeError):
    """The designer returned a non-optimal status during a run."""

    def __init__(self, message, episode, status, learner):
        super().__init__(message)
        self.episode, self.status, self.learner = episode, status, learner


@dataclass
class DesignerConfig:
    objective: str = "ih1"
    depth: int = 1
    r_max: float = None          # None: the environment's R_max
    invariance: bool = True
    support: list = None
    strict_margin: float = None


@dataclass
class TrainingConfig:
    episodes: int = 20_000
    n_r: int = 5
    n_pi: int = 2
    buffer_size: int = 10
    eval_period: int = 100
    eval_mode: str = "exact"     # or "rollout"
    eval_episodes: int = 100
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    designer: DesignerConfig = field(default_factory=DesignerConfig)
    master_seed: int = 0
    initial_reward: str = "design"   # reward in force before the first redesign
    snapshot_period: int = 0
    stop_fraction: float = None      # stop once J reaches this fraction of J(pi_t)
    verify_designs: bool = False
    check_target: bool = True

    def __post_init__(self):
        if isinstance(self.learner, dict):
            self.learner = LearnerConfig(**self.learner)
        if isinstance(self.designer, dict):
            self.designer = DesignerConfig(**self.designer)
        if self.n_r < 1 or self.n_pi < 1:
            raise ValueError("n_r and n_pi must be at least 1")
        if self.episodes < 0 or self.buffer_size < 1 or self.eval_period < 1:
            raise ValueError("episodes >= 0, buffer_size >= 1 and eval_period >= 1 required")
        if self.eval_mode not in ("exact", "rollout"):
            raise ValueError(f"unknown eval_mode {self.eval_mode!r}")
        if self.initial_reward not in ("design", "base"):
            raise ValueError(f"unknown initial_reward {self.initial_reward!r}")


NR_PRESETS = {"nr5": 5, "nr100": 100, "nr1000": 1000}


@dataclass
class EvalRow:
    episode: int
    mean_J: float
    stderr_J: float
    objective: float
    reward_hash: str


@dataclass
class RunRecord:
    technique: str
    run_index: int
    rows: list
    target_return: float
    n_designs: int
    manifest: dict
    final_theta: np.ndarray = None
    final_policy: np.ndarray = None
    snapshots: list = field(default_factory=list)

    @property
    def episodes(self) -> np.ndarray:
        return np.array([r.episode for r in self.rows])

    @property
    def mean_J(self) -> np.ndarray:
        return np.array([r.mean_J for r in self.rows])

    def fingerprint(self) -> str:
        """Hash of everything a replay must reproduce bit for bit."""
        h = hashlib.sha256()
        for r in self.rows:
            h.update(np.array([r.episode, r.mean_J, r.stderr_J, r.objective]).tobytes())
            h.update(r.reward_hash.encode())
        h.update(np.ascontiguousarray(self.final_policy).tobytes())
        return h.hexdigest()


def reward_hash(reward: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(reward, dtype=float).tobytes()).hexdigest()[:16]


def run_rng(master_seed: int, run_index: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, run_index, STREAMS[stream]]))


def check_target_optimal(mdp: TabularMdp, pi_t, base_reward=None, tol: float = 1e-8):
    base_reward = mdp.base_reward if base_reward is None else base_reward
    v_t = policy_eval(mdp, base_reward, pi_t).v
    v_star = optimal_values(mdp, base_reward).v
    gap = float(np.max(v_star - v_t))
    if gap > tol * max(1.0, np.abs(v_star).max()):
        raise ValueError(f"target policy is not optimal under the base reward (gap {gap:.3g}); "
                         "disable check_target for a weak target")


# ---------------------------------------------------------------- reward sources


class _FixedReward:
    def __init__(self, reward):
        self.reward = np.array(reward, dtype=float)
        self.objective = float("nan")
        self.n_designs = 0

    def initial(self, learner_probs):
        return self.reward

    def update(self, learner_probs, episode):
        return self.reward


class _AdaptiveReward:
    def __init__(self, designer: RewardDesigner, initial_reward: str, verify: bool):
        self.designer = designer
        self.initial_mode = initial_reward
        self.verify = verify
        self.objective = float("nan")
        self.n_designs = 0

    def _design(self, learner_probs, episode):
        sol = self.designer.design(learner_probs)
        if sol.status != "optimal":
            raise DesignFailure(f"design returned {sol.status} at episode {episode}",
                                episode, sol.status, learner_probs)
        self.n_designs += 1
        self.objective = sol.objective_value
        reward = sol.reward(self.designer.feature_map)
        if self.verify:
            from .designer import verify_policy_invariance
            report = verify_policy_invariance(reward, self.designer.mdp, self.designer.pi_t,
                                              self.designer.base_reward)
            if not report.passed:
                raise DesignFailure(f"designed reward breaks invariance at episode {episode}",
                                    episode, "invariance", learner_probs)
        return reward

    def initial(self, learner_probs):
        if self.initial_mode == "base":
            return np.array(self.designer.base_reward, dtype=float)
        return self._design(learner_probs, 0)

    def update(self, learner_probs, episode):
        return self._design(learner_probs, episode)


def make_designer(mdp, feature_map, pi_t, dcfg: DesignerConfig, objective=None,
                  r_max_default: float = None, external_coefficients=None) -> RewardDesigner:
    r_max = dcfg.r_max if dcfg.r_max is not None else r_max_default
    if r_max is None:
        r_max = float(np.abs(mdp.base_reward).max()) or 1.0
    return RewardDesigner(mdp, feature_map, pi_t, r_max,
                          objective=objective or dcfg.objective, depth=dcfg.depth,
                          support=dcfg.support, invariance=dcfg.invariance,
                          strict_margin=dcfg.strict_margin,
                          external_coefficients=external_coefficients)


def invar_reward(mdp, feature_map, pi_t, dcfg: DesignerConfig, r_max_default=None) -> np.ndarray:
    """One-shot design with a constant objective: any feasible invariant reward."""
    designer = make_designer(mdp, feature_map, pi_t, dcfg, "constant", r_max_default)
    sol = designer.solve(designer.context(uniform_policy(mdp.n_states, mdp.n_actions)))
    if sol.status != "optimal":
        raise DesignFailure(f"invariance-only design returned {sol.status}", 0, sol.status, None)
    return sol.reward(feature_map)


# ---------------------------------------------------------------- the loop


def _evaluate(mdp, policy, cfg: TrainingConfig, sampler, rng):
    if cfg.eval_mode == "exact":
        return finite_horizon_return(mdp, mdp.base_reward, policy), 0.0
    returns = [trajectory_return(sampler.rollout(policy, rng), mdp.base_reward, mdp.gamma)
               for _ in range(cfg.eval_episodes)]
    return float(np.mean(returns)), float(np.std(returns, ddof=1) / np.sqrt(len(returns)))


def _train(mdp: TabularMdp, technique: str, source, cfg: TrainingConfig, run_index: int,
           initial_policy, target_return: float, manifest: dict) -> RunRecord:
    lcfg = cfg.learner
    probs0 = (uniform_policy(mdp.n_states, mdp.n_actions) if initial_policy is None
              else check_policy(mdp, initial_policy))
    policy = SoftmaxPolicy.from_probs(probs0) if lcfg.kind != "greedy" else None
    probs = probs0.copy()
    rng = run_rng(cfg.master_seed, run_index, "rollout")
    eval_rng = run_rng(cfg.master_seed, run_index, "eval")
    learner_rng = run_rng(cfg.master_seed, run_index, "learner")
    sampler = Sampler(mdp)
    buffer = ReplayBuffer(cfg.buffer_size)
    reward = source.initial(probs)
    rows, snapshots = [], []
    stop_at = None if cfg.stop_fraction is None else cfg.stop_fraction * target_return

    def record(k):
        mean, se = _evaluate(mdp, probs, cfg, sampler, eval_rng)
        rows.append(EvalRow(k, mean, se, source.objective, reward_hash(reward)))
        return mean

    def snapshot(k):
        if cfg.snapshot_period and k % cfg.snapshot_period == 0:
            snapshots.append((k, reward.copy(), probs.copy()))

    record(0)
    snapshot(0)
    for k in range(1, cfg.episodes + 1):
        # reward first, then policy, when both periods fire on the same episode
        if k % cfg.n_r == 0:
            reward = source.update(probs, k)
        if k % cfg.n_pi == 0 and (len(buffer) or lcfg.kind != "reinforce"):
            if lcfg.kind == "reinforce":
                policy = reinforce_update(policy, buffer, reward, mdp.gamma, lcfg.alpha,
                                          lcfg.baseline)
                probs = policy.probs
            elif lcfg.kind == "simple_pg":
                policy = simple_pg_update(policy, mdp, reward, lcfg.alpha, lcfg.h)
                probs = policy.probs
            else:
                probs = greedy_update(reward, learner_rng, lcfg.stochastic_ties)
        buffer.push(sampler.rollout(probs, rng, seed_tag=f"{cfg.master_seed}/{run_index}/{k}"))
        snapshot(k)
        if k % cfg.eval_period == 0 or k == cfg.episodes:
            mean = record(k)
            if stop_at is not None and mean >= stop_at:
                break
    manifest = dict(manifest, episodes_run=rows[-1].episode, n_designs=source.n_designs)
    return RunRecord(technique, run_index, rows, target_return, source.n_designs, manifest,
                     None if policy is None else policy.theta, probs, snapshots)


def _manifest(technique, cfg: TrainingConfig, run_index, mdp, extra=None):
    out = {
        "format": "reward-design-run/1",
        "technique": technique,
        "run_index": run_index,
        "master_seed": cfg.master_seed,
        "code_version": __version__,
        "config": asdict(cfg),
        "mdp": {"n_states": mdp.n_states, "n_actions": mdp.n_actions, "gamma": mdp.gamma,
                "horizon": mdp.horizon},
    }
    out.update(extra or {})
    return out


def run_technique(technique: str, mdp: TabularMdp, feature_map: FeatureMap, pi_t,
                  cfg: TrainingConfig, run_index: int = 0, initial_policy=None,
                  external_reward=None, r_max: float = None, extra_manifest=None) -> RunRecord:
    if technique not in TECHNIQUES:
        raise ValueError(f"unknown technique {technique!r}; choose from {TECHNIQUES}")
    pi_t = check_policy(mdp, pi_t)
    if cfg.check_target:
        check_target_optimal(mdp, pi_t)
    if technique == "adaptive":
        source = _AdaptiveReward(make_designer(mdp, feature_map, pi_t, cfg.designer, None, r_max),
                                 cfg.initial_reward, cfg.verify_designs)
    elif technique == "orig":
        source = _FixedReward(mdp.base_reward)
    elif technique == "invar":
        source = _FixedReward(invar_reward(mdp, feature_map, pi_t, cfg.designer, r_max))
    else:
        if external_reward is None:
            raise ValueError("the external technique needs a reward table")
        source = _FixedReward(external_reward)
        if source.reward.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError("external reward has the wrong shape")
    target_return = finite_horizon_return(mdp, mdp.base_reward, pi_t)
    manifest = _manifest(technique, cfg, run_index, mdp, extra_manifest)
    return _train(mdp, technique, source, cfg, run_index, initial_policy, target_return, manifest)


def run_adaptive(mdp, feature_map, pi_t, cfg: TrainingConfig, run_index: int = 0,
                 initial_policy=None, **kw) -> RunRecord:
    """Redesign the reward every n_r episodes for the learner's current policy."""
    return run_technique("adaptive", mdp, feature_map, pi_t, cfg, run_index, initial_policy, **kw)


def run_baseline(mdp, feature_map, pi_t, cfg: TrainingConfig, which: str, run_index: int = 0,
                 initial_policy=None, external_reward=None, **kw) -> RunRecord:
    """Same loop with a reward that never changes: the base reward ("orig"), a
    one-shot invariant design ("invar") or a supplied table ("external")."""
    if which not in ("orig", "invar", "external"):
        raise ValueError(f"unknown baseline {which!r}")
    return run_technique(which, mdp, feature_map, pi_t, cfg, run_index, initial_policy,
                         external_reward, **kw)


# ---------------------------------------------------------------- convergence experiment


@dataclass
class ConvergenceReport:
    n_actions: int
    target_support: np.ndarray
    supports: list
    converged_round: int = None

    @property
    def passed(self) -> bool:
        return self.converged_round is not None and self.converged_round <= self.n_actions


def theorem1_experiment(mdp: TabularMdp, pi_t, r_max: float, max_rounds: int = None,
                        base_reward=None, initial_policy=None) -> ConvergenceReport:
    """Alternate the box-constrained bang-bang design with the greedy h=1
    learner (uniform over tied actions) until every state's support equals
    argmax_a A^{pi_t}(s, a)."""
    base_reward = mdp.base_reward if base_reward is None else base_reward
    pi_t = check_policy(mdp, pi_t)
    S, A = mdp.n_states, mdp.n_actions
    max_rounds = 2 * A if max_rounds is None else max_rounds
    adv = policy_eval(mdp, base_reward, pi_t).adv
    target_support = argmax_sets(adv)
    cache = (adv, occupancy(mdp, pi_t).state)
    learner = uniform_policy(S, A) if initial_policy is None else check_policy(mdp, initial_policy)
    supports = []
    for k in range(1, max_rounds + 1):
        ctx = InformativenessContext.build(mdp, pi_t, learner, 1, base_reward, target_cache=cache)
        reward = bangbang_design(ctx, r_max, zero_prob_actions="penalize")
        learner = greedy_update(reward, stochastic_ties=True)
        support = learner > 0
        supports.append(support)
        if np.array_equal(support, target_support):
            return ConvergenceReport(A, target_support, supports, k)
    return ConvergenceReport(A, target_support, supports, None)


def distinct_advantage_instance(rng: np.random.Generator, max_states: int = 6,
                                max_actions: int = 5, gap: float = 1e-6, gamma: float = 0.9,
                                min_actions: int = 2):
    """Random MDP with its optimal target whose advantages are pairwise
    distinct (by more than ``gap``) at every state. Sizes are drawn from
    [2, max_states] x [min_actions, max_actions]."""
    from .envs import target_policy
    from .mdp import random_mdp

    while True:
        S = int(rng.integers(2, max_states + 1))
        A = int(rng.integers(min_actions, max_actions + 1))
        mdp = random_mdp(rng, S, A, gamma=gamma)
        pi_t = target_policy(mdp)
        adv = np.sort(policy_eval(mdp, mdp.base_reward, pi_t).adv, axis=1)
        if np.all(np.diff(adv, axis=1) > gap):
            return mdp, pi_t


def theorem1_suite(n_mdps: int = 100, max_states: int = 6, max_actions: int = 5,
                   seed: int = 0, r_max: float = 1.0, min_actions: int = 2):
    """Run the convergence experiment on ``n_mdps`` random instances."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_mdps):
        mdp, pi_t = distinct_advantage_instance(rng, max_states, max_actions,
                                                min_actions=min_actions)
        reports.append(theorem1_experiment(mdp, pi_t, r_max))
    return reports


# ---------------------------------------------------------------- comparison


def episodes_to_threshold(record: RunRecord, threshold: float):
    """First evaluated episode with mean J >= threshold, or None (censored)."""
    for row in record.rows:
        if row.mean_J >= threshold:
            return row.episode
    return None


@dataclass
class TechniqueSummary:
    technique: str
    episodes: list
    censored_value: int
    median: float
    q25: float
    q75: float
    mean: float
    stderr: float
    n_censored: int

    def as_dict(self):
        return asdict(self)


def compare_runs(records, threshold_fraction: float = 0.9, horizon_episodes: int = None) -> dict:
    """Episodes-to-threshold per technique, threshold = fraction * J(pi_t).

    Runs that never reach the threshold count as ``horizon_episodes + 1`` in
    the statistics (default: one more than the longest configured run).
    """
    if not records:
        return {}
    if horizon_episodes is None:
        horizon_episodes = max(r.manifest["config"]["episodes"] for r in records)
    censor = horizon_episodes + 1
    by_tech = {}
    for rec in records:
        by_tech.setdefault(rec.technique, []).append(rec)
    out = {}
    for tech, recs in by_tech.items():
        eps = [episodes_to_threshold(r, threshold_fraction * r.target_return) for r in recs]
        vals = np.array([censor if e is None else e for e in eps], dtype=float)
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out[tech] = TechniqueSummary(tech, eps, censor, float(np.median(vals)),
                                     float(np.percentile(vals, 25)), float(np.percentile(vals, 75)),
                                     float(vals.mean()), se, sum(e is None for e in eps))
    return out


def final_window_mean(record: RunRecord, window: int) -> float:
    """Mean J over evaluation rows in the last ``window`` episodes."""
    last = record.rows[-1].episode
    vals = [r.mean_J for r in record.rows if r.episode > last - window]
    return float(np.mean(vals))
