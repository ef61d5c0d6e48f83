"""Named property suite. Every invariant of the toolkit is a function here
returning ``(passed, detail)``; ``run_checks`` runs all or a selection.

Checks compare the main implementation against the independent routes in
:mod:`reward_design.oracles` or against an algebraic identity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import oracles
from .designer import (DesignProblem, RewardDesigner, build_invariance_constraints,
                       reward_operator, solve_design, verify_policy_invariance)
from .envs import (FeatureMap, LineKConfig, ParametricReward, RoomConfig, abstraction_features,
                   build_linek, build_room, phi_for_reward, target_policy)
from .harness import TrainingConfig, run_technique, theorem1_suite
from .informativeness import (InformativenessContext, bangbang_design, bilevel_informativeness,
                              h1_coefficients, informativeness_h1, informativeness_h1_per_state,
                              prop1_gradient, z_values)
from .learners import (LearnerConfig, ReplayBuffer, SoftmaxPolicy, greedy_update,
                       reinforce_gradient, simple_pg_update, softmax)
from .mdp import (Sampler, Trajectory, TabularMdp, finite_horizon_return, greedy_policy,
                  h_step_q, occupancy, optimal_values, policy_eval, random_mdp,
                  trajectory_return, uniform_policy)
from .simplex import OPTIMAL, linprog_max


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# ---------------------------------------------------------------- instance helpers


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def random_context(rng: np.random.Generator, n_states: int = 4, n_actions: int = 3,
                   depth: int = 1, gamma: float = 0.9) -> InformativenessContext:
    """Random MDP, its optimal target and a random interior learner policy."""
    mdp = random_mdp(rng, n_states, n_actions, gamma=gamma)
    return InformativenessContext.build(mdp, target_policy(mdp),
                                        random_policy(rng, n_states, n_actions), depth)


def random_partition_features(rng: np.random.Generator, n_states: int, n_actions: int,
                              n_regions: int) -> FeatureMap:
    regions = rng.integers(0, n_regions, size=n_states)
    regions[:n_regions] = np.arange(n_regions)  # every region used
    return abstraction_features(rng.permutation(regions), n_regions, n_actions)


def tabular_features(n_states: int, n_actions: int) -> FeatureMap:
    return FeatureMap(np.eye(n_states * n_actions).reshape(n_states, n_actions, -1))


def gradient_relative_errors(ctx: InformativenessContext, fmap: FeatureMap, alphas,
                             eps: float = 1e-4, seed: int = 0):
    """Relative error between prop1_gradient and central differences of the
    bi-level criterion at a random phi, for each step size."""
    phi = np.random.default_rng(seed).normal(size=fmap.dim)
    out = []
    for alpha in alphas:
        learner = LearnerConfig(kind="simple_pg", alpha=alpha, h=ctx.depth)
        fd = oracles.central_difference(
            lambda p: bilevel_informativeness(ParametricReward(p, fmap), ctx, learner), phi, eps)
        g = prop1_gradient(ParametricReward(phi, fmap), ctx, alpha)
        out.append(float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return out


def _fmt(x):
    return f"{x:.3g}"


# ---------------------------------------------------------------- mdp-core


def check_advantage_zero_mean(seed=0, n=30):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, int(rng.integers(2, 8)), int(rng.integers(2, 5)), terminal_prob=0.2)
        pi = random_policy(rng, mdp.n_states, mdp.n_actions)
        vb = policy_eval(mdp, rng.normal(size=mdp.base_reward.shape), pi)
        worst = max(worst, np.abs(np.einsum("sa,sa->s", pi, vb.adv)).max())
    return worst <= 1e-9, f"max |E_pi adv| = {_fmt(worst)}"


def check_occupancy_series(seed=0, n=20):
    rng = np.random.default_rng(seed)
    worst_sum = worst_err = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, int(rng.integers(1, 11)), int(rng.integers(1, 4)), terminal_prob=0.1)
        pi = random_policy(rng, mdp.n_states, mdp.n_actions)
        occ = occupancy(mdp, pi).state
        worst_sum = max(worst_sum, abs(occ.sum() - 1))
        worst_err = max(worst_err, np.abs(occ - oracles.truncated_occupancy(mdp, pi)).max())
    ok = worst_sum <= 1e-9 and worst_err <= 1e-6
    return ok, f"sum error {_fmt(worst_sum)}, series error {_fmt(worst_err)}"


def check_policy_eval_series(seed=0, n=20):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)), terminal_prob=0.2)
        pi = random_policy(rng, mdp.n_states, mdp.n_actions)
        v = policy_eval(mdp, mdp.base_reward, pi).v
        worst = max(worst, np.abs(v - oracles.truncated_values(mdp, mdp.base_reward, pi)).max())
    return worst <= 1e-8, f"max |v - series| = {_fmt(worst)}"


def check_optimal_brute_force(seed=0, n=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, int(rng.integers(2, 6)), int(rng.integers(2, 4)), terminal_prob=0.1)
        v = optimal_values(mdp, mdp.base_reward).v
        worst = max(worst, np.abs(v - oracles.brute_force_optimal_values(mdp, mdp.base_reward)).max())
    return worst <= 1e-8, f"max |v* - brute force| = {_fmt(worst)}"


def check_greedy_reproduces_optimal(seed=0, n=20, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, int(rng.integers(2, 8)), int(rng.integers(2, 5)))
        opt = optimal_values(mdp, mdp.base_reward, tol=tol)
        pi = greedy_policy(opt, rng)
        worst = max(worst, np.abs(policy_eval(mdp, mdp.base_reward, pi, tol=tol).v - opt.v).max())
    return worst <= 2 * tol, f"max |V^greedy - V*| = {_fmt(worst)}"


def check_h_step_paths(seed=0, n=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, 4, 2, terminal_prob=0.2)
        pi = random_policy(rng, 4, 2)
        for h in (0, 1, 3):
            q = h_step_q(mdp, mdp.base_reward, pi, h).q
            worst = max(worst, np.abs(q - oracles.enumerate_h_step_q(mdp, mdp.base_reward, pi, h)).max())
    return worst <= 1e-12, f"max |q_h - path sum| = {_fmt(worst)}"


def check_h_step_monotone(seed=0, n=10, h_max=60):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n):
        mdp = random_mdp(rng, 5, 3, terminal_prob=0.1)
        R = np.abs(mdp.base_reward)
        pi = random_policy(rng, 5, 3)
        q = policy_eval(mdp, R, pi).q
        gaps = [np.abs(h_step_q(mdp, R, pi, h).q - q).max() for h in range(h_max)]
        ok &= bool(np.all(np.diff(gaps) <= 1e-12)) and gaps[-1] < gaps[0]
    return ok, "sup-norm gap to q^pi non-increasing in h"


def check_rollout_mean(seed=0, n_rollouts=20_000):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 3, horizon=8, terminal_prob=0.15)
    pi = random_policy(rng, 5, 3)
    sampler = Sampler(mdp)
    ret = np.array([trajectory_return(sampler.rollout(pi, rng), mdp.base_reward, mdp.gamma)
                    for _ in range(n_rollouts)])
    exact = finite_horizon_return(mdp, mdp.base_reward, pi)
    se = ret.std(ddof=1) / np.sqrt(len(ret))
    return abs(ret.mean() - exact) <= 3 * se, f"|mean - J| = {_fmt(abs(ret.mean() - exact))}, 3 SE = {_fmt(3 * se)}"


# ---------------------------------------------------------------- env-zoo


def _envs():
    return {"room": build_room(RoomConfig()), "linek": build_linek(LineKConfig())}


def check_base_reward_expressible():
    details = []
    ok = True
    for name, (mdp, fmap) in _envs().items():
        phi = phi_for_reward(mdp.base_reward, fmap)
        good = phi is not None and np.array_equal(fmap.features @ phi, mdp.base_reward)
        ok &= good
        details.append(f"{name}: {'exact' if good else 'not expressible'}")
    return ok, ", ".join(details)


def check_feature_partition():
    ok = all(fmap.is_partition() for _, fmap in _envs().values())
    return ok, "one active feature per (s, a) in Room and LineK"


def check_kernel_rows():
    worst = max(np.abs(m.transition.sum(axis=2) - 1).max() for m, _ in _envs().values())
    return worst <= 1e-12, f"max |row sum - 1| = {_fmt(worst)}"


def check_room_goal_reachable():
    mdp, _ = build_room(RoomConfig(p_rand=0.0))
    pi = target_policy(mdp)
    traj = Sampler(mdp).rollout(pi, np.random.default_rng(0))
    reached = len(traj) > 0 and mdp.base_reward[traj.states[-1], traj.actions[-1]] > 0
    return bool(reached), f"noiseless target reaches the goal in {len(traj)} steps (H = {mdp.horizon})"


# ---------------------------------------------------------------- informativeness


def check_linearity(seed=0, n=50):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ctx = random_context(rng, 4, 3)
        R1, R2 = rng.normal(size=(2, 4, 3))
        a, b = rng.normal(size=2)
        lhs = informativeness_h1(a * R1 + b * R2, ctx)
        rhs = a * informativeness_h1(R1, ctx) + b * informativeness_h1(R2, ctx)
        worst = max(worst, abs(lhs - rhs))
    return worst <= 1e-9, f"max deviation {_fmt(worst)}"


def check_dual_form(seed=0, n=200):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ctx = random_context(rng, int(rng.integers(2, 7)), int(rng.integers(2, 5)))
        R = rng.normal(size=ctx.learner.shape)
        worst = max(worst, abs(informativeness_h1(R, ctx) - informativeness_h1_per_state(R, ctx)))
    return worst <= 1e-10, f"max |expectation form - per-state form| = {_fmt(worst)} over {n} instances"


def check_z_consistency(seed=0, n=50):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ctx = random_context(rng, 5, 3)
        R = rng.normal(size=(5, 3))
        centred = R - np.einsum("sa,sa->s", ctx.learner, R)[:, None]
        coef = h1_coefficients(ctx)
        for table in (R, centred):
            worst = max(worst, abs(np.sum(coef * table) - informativeness_h1(table, ctx)))
    return worst <= 1e-10, f"max |sum coef * R - I| = {_fmt(worst)} (raw and centred)"


def check_z_zero_mean(seed=0, n=50):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ctx = random_context(rng, 5, 4)
        worst = max(worst, np.abs(np.einsum("sa,sa->s", ctx.learner, z_values(ctx))).max())
    return worst <= 1e-9, f"max |E_pi Z| = {_fmt(worst)}"


def check_bangbang_optimal(seed=0, n=50, r_max=2.0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        while True:
            S, A = int(rng.integers(1, 5)), int(rng.integers(2, 5))
            if S * A <= 12:
                break
        ctx = random_context(rng, S, A)
        R = bangbang_design(ctx, r_max)
        best, _ = oracles.exhaustive_box_max(lambda T: informativeness_h1(T, ctx), (S, A), r_max)
        worst = max(worst, best - informativeness_h1(R, ctx))
    return worst <= 1e-9, f"max gap to exhaustive optimum {_fmt(worst)}"


def check_sign_invariance(seed=0, n=30):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n):
        ctx = random_context(rng, 4, 3)
        scaled = InformativenessContext(ctx.mdp, ctx.base_reward, ctx.target, ctx.learner,
                                        ctx.depth, ctx.target_adv * rng.uniform(0.1, 10),
                                        ctx.mu_t, ctx.mu_l)
        ok &= np.array_equal(bangbang_design(ctx, 1.0), bangbang_design(scaled, 1.0))
    return ok, "bang-bang table unchanged under positive advantage scaling"


def check_gradient_agreement(seed=0, n=20):
    rng = np.random.default_rng(seed)
    alphas = (1e-2, 1e-3, 1e-4)
    worst = 0.0
    monotone = True
    for i in range(n):
        for h in (1, 2):
            ctx = random_context(rng, 4, 3, depth=h)
            fmap = random_partition_features(rng, 4, 3, 3)
            errs = gradient_relative_errors(ctx, fmap, alphas, seed=i)
            worst = max(worst, errs[1])
            monotone &= errs[0] > errs[1] > errs[2]
    return worst <= 1e-3 and monotone, f"max relative error at alpha=1e-3: {_fmt(worst)}, monotone: {monotone}"


# ---------------------------------------------------------------- learners


def check_softmax_shift(seed=0):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(6, 4))
    shifted = theta + rng.normal(size=(6, 1)) * 50
    err = np.abs(softmax(theta) - softmax(shifted)).max()
    return err <= 1e-12, f"max probability change {_fmt(err)}"


def check_reinforce_unbiased(seed=0, n_samples=100_000):
    """One state, one-step episodes: the sample mean of the per-trajectory
    gradient matches the exact gradient within 3 standard errors."""
    rng = np.random.default_rng(seed)
    A = 4
    theta = rng.normal(size=(1, A))
    pi = softmax(theta)[0]
    R = rng.normal(size=(1, A))
    # per-trajectory gradient for each possible action
    g = np.array([reinforce_gradient(theta, [Trajectory(np.array([0]), np.array([a]),
                                                        np.array([0]))], R, 0.9)[0]
                  for a in range(A)])
    draws = rng.choice(A, size=n_samples, p=pi)
    samples = g[draws]
    mean, se = samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(n_samples)
    exact = pi * (R[0] - pi @ R[0])
    z = np.abs(mean - exact) / np.maximum(se, 1e-300)
    return bool(np.all(z <= 3)), f"max z-score {_fmt(z.max())}"


def check_simple_pg_constant(seed=0):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 3)
    pol = SoftmaxPolicy(rng.normal(size=(5, 3)))
    new = simple_pg_update(pol, mdp, np.full((5, 3), 2.5), alpha=0.7, h=2)
    err = np.abs(new.probs - pol.probs).max()
    return err <= 1e-12, f"max probability change {_fmt(err)}"


def check_greedy_scale(seed=0, n=30):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(n):
        R = rng.integers(-2, 3, size=(5, 4)).astype(float)
        c = rng.uniform(0.01, 100)
        ok &= np.array_equal(greedy_update(R, stochastic_ties=True) > 0,
                             greedy_update(c * R, stochastic_ties=True) > 0)
    return ok, "support sets equal for R and c R"


def check_buffer_fifo():
    buf = ReplayBuffer(3)
    for k in range(7):
        buf.push(Trajectory(np.array([k]), np.array([0]), np.array([0])))
    kept = [int(t.states[0]) for t in buf]
    return kept == [4, 5, 6] and len(buf) == 3, f"kept {kept}"


# ---------------------------------------------------------------- reward-designer


def _design_instances(rng, n, features="tabular"):
    for _ in range(n):
        S, A = int(rng.integers(2, 6)), int(rng.integers(2, 4))
        ctx = random_context(rng, S, A)
        fmap = tabular_features(S, A) if features == "tabular" else \
            random_partition_features(rng, S, A, max(1, S - 1))
        yield ctx, fmap


def check_operator_matches_policy_eval(seed=0, n=20):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mdp = random_mdp(rng, 4, 3, terminal_prob=0.2)
        pi = random_policy(rng, 4, 3)
        R = rng.normal(size=(4, 3))
        q, v = reward_operator(mdp, pi).apply(R)
        vb = policy_eval(mdp, R, pi)
        worst = max(worst, np.abs(q - vb.q).max(), np.abs(v - vb.v).max())
    return worst <= 1e-8, f"max |operator - policy_eval| = {_fmt(worst)}"


def check_base_feasible(seed=0, n=30):
    rng = np.random.default_rng(seed)
    ok = True
    worst = 0.0
    for ctx, fmap in _design_instances(rng, n):
        G, h = build_invariance_constraints(ctx.mdp, ctx.base_reward, ctx.target, fmap)
        phi = phi_for_reward(ctx.base_reward, fmap)
        worst = max(worst, np.abs(G @ phi - h).max())
        ok &= solve_design(DesignProblem(ctx, fmap, r_max=10.0)).status == OPTIMAL
    return ok and worst <= 1e-8, f"base reward tight on all rows (max slack {_fmt(worst)}); all designs optimal: {ok}"


def check_invariance_preserved(seed=0, n=50):
    rng = np.random.default_rng(seed)
    failures = 0
    for ctx, fmap in _design_instances(rng, n):
        sol = solve_design(DesignProblem(ctx, fmap, r_max=float(np.abs(ctx.base_reward).max())))
        failures += not verify_policy_invariance(sol.reward(fmap), ctx.mdp, ctx.target).passed
    for name, (mdp, fmap) in _envs().items():
        pi_t = target_policy(mdp)
        designer = RewardDesigner(mdp, fmap, pi_t, 10.0)
        for learner in (uniform_policy(mdp.n_states, mdp.n_actions),
                        random_policy(rng, mdp.n_states, mdp.n_actions)):
            sol = designer.design(learner)
            failures += not verify_policy_invariance(sol.reward(fmap), mdp, pi_t).passed
    return failures == 0, f"{failures} designs failed the invariance check"


def check_objective_dominance(seed=0, n=30):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for ctx, fmap in _design_instances(rng, n):
        r_max = float(np.abs(ctx.base_reward).max())
        best = solve_design(DesignProblem(ctx, fmap, r_max=r_max)).reward(fmap)
        invar = solve_design(DesignProblem(ctx, fmap, r_max=r_max, objective="constant")).reward(fmap)
        top = informativeness_h1(best, ctx)
        worst = max(worst, informativeness_h1(ctx.base_reward, ctx) - top,
                    informativeness_h1(invar, ctx) - top)
    return worst <= 1e-9, f"max shortfall of the optimum {_fmt(worst)}"


def random_lp(rng: np.random.Generator, n_vars: int, n_rows: int):
    A = rng.normal(size=(n_rows, n_vars))
    x0 = rng.uniform(-0.5, 0.5, size=n_vars)
    b = A @ x0 + rng.uniform(0, 1, size=n_rows)  # x0 strictly feasible
    return rng.normal(size=n_vars), A, b, -np.ones(n_vars), np.ones(n_vars)


def check_lp_exactness(seed=0, n=100, max_dim=8, max_rows=30):
    """Random bounded LPs with d <= max_dim and at most max_rows rows in
    total, bound rows included."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, max_dim + 1))
        c, A, b, lo, up = random_lp(rng, d, int(rng.integers(1, max_rows - 2 * d + 1)))
        res = linprog_max(c, A, b, lo, up)
        best, _ = oracles.vertex_enumeration_max(c, A, b, lo, up)
        worst = max(worst, abs(res.objective - best))
    return worst <= 1e-7, f"max |simplex - vertex enumeration| = {_fmt(worst)}"


def check_design_determinism(seed=0, n=10):
    rng = np.random.default_rng(seed)
    ok = True
    for ctx, fmap in _design_instances(rng, n, features="partition"):
        p = DesignProblem(ctx, fmap, r_max=5.0)
        ok &= np.array_equal(solve_design(p).phi, solve_design(p).phi)
    return ok, "repeated solves are bit-identical"


# ---------------------------------------------------------------- training-harness


def check_theorem1(n_mdps=100):
    reports = theorem1_suite(n_mdps)
    passed = sum(r.passed for r in reports)
    return passed == n_mdps, f"converged within |A| rounds: {passed}/{n_mdps}"


def _short_linek_config(**kw):
    base = dict(episodes=200, eval_period=50, learner=LearnerConfig(alpha=0.02, baseline=True))
    base.update(kw)
    return TrainingConfig(**base)


def check_replay_determinism():
    mdp, fmap = build_linek(LineKConfig())
    pi_t = target_policy(mdp)
    cfg = _short_linek_config(master_seed=3)
    a = run_technique("adaptive", mdp, fmap, pi_t, cfg, 1)
    b = run_technique("adaptive", mdp, fmap, pi_t, cfg, 1)
    return a.fingerprint() == b.fingerprint(), f"fingerprint {a.fingerprint()[:12]}"


def check_designs_pass_invariance():
    mdp, fmap = build_linek(LineKConfig())
    rec = run_technique("adaptive", mdp, fmap, target_policy(mdp),
                        _short_linek_config(verify_designs=True), 0)
    return True, f"{rec.n_designs} designs verified during training"


CHECKS = {
    "mdp.advantage_zero_mean": check_advantage_zero_mean,
    "mdp.occupancy_series": check_occupancy_series,
    "mdp.policy_eval_series": check_policy_eval_series,
    "mdp.optimal_brute_force": check_optimal_brute_force,
    "mdp.greedy_reproduces_optimal": check_greedy_reproduces_optimal,
    "mdp.h_step_paths": check_h_step_paths,
    "mdp.h_step_monotone": check_h_step_monotone,
    "mdp.rollout_mean": check_rollout_mean,
    "envs.base_reward_expressible": check_base_reward_expressible,
    "envs.feature_partition": check_feature_partition,
    "envs.kernel_rows": check_kernel_rows,
    "envs.room_goal_reachable": check_room_goal_reachable,
    "info.linearity": check_linearity,
    "info.dual_form": check_dual_form,
    "info.z_consistency": check_z_consistency,
    "info.z_zero_mean": check_z_zero_mean,
    "info.bangbang_optimal": check_bangbang_optimal,
    "info.sign_invariance": check_sign_invariance,
    "info.gradient_agreement": check_gradient_agreement,
    "learners.softmax_shift": check_softmax_shift,
    "learners.reinforce_unbiased": check_reinforce_unbiased,
    "learners.simple_pg_constant": check_simple_pg_constant,
    "learners.greedy_scale": check_greedy_scale,
    "learners.buffer_fifo": check_buffer_fifo,
    "designer.operator_matches_policy_eval": check_operator_matches_policy_eval,
    "designer.base_feasible": check_base_feasible,
    "designer.invariance_preserved": check_invariance_preserved,
    "designer.objective_dominance": check_objective_dominance,
    "designer.lp_exactness": check_lp_exactness,
    "designer.determinism": check_design_determinism,
    "harness.theorem1": check_theorem1,
    "harness.replay_determinism": check_replay_determinism,
    "harness.designs_pass_invariance": check_designs_pass_invariance,
}


def run_checks(names=None) -> list:
    names = list(CHECKS) if not names else names
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    results = []
    for name in names:
        t0 = time.perf_counter()
        try:
            passed, detail = CHECKS[name]()
        except Exception as exc:  # a crash is a failed property
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return results
