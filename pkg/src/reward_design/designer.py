"""Per-round reward design: maximize a linear informativeness objective over
feature weights phi subject to policy-invariance inequalities, a box bound
and an optional support restriction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import FeatureMap, ParametricReward, reward_from_phi
from .informativeness import (InformativenessContext, h1_coefficients, target_terms,
                              weights)
from .mdp import TabularMdp, argmax_sets, check_policy, h_step_advantage, optimal_values
from .simplex import INFEASIBLE, OPTIMAL, SimplexSolver

OBJECTIVES = ("ih1", "ih", "constant", "external")


@dataclass(frozen=True)
class LinearRewardOperator:
    """Q^pi_R and V^pi_R as matrices acting on the flattened reward R[s*A + a]."""

    q: np.ndarray
    v: np.ndarray
    n_actions: int

    @property
    def adv(self) -> np.ndarray:
        return self.q - np.repeat(self.v, self.n_actions, axis=0)

    def apply(self, reward: np.ndarray):
        flat = np.asarray(reward, dtype=float).ravel()
        S = self.v.shape[0]
        return (self.q @ flat).reshape(S, self.n_actions), self.v @ flat


def reward_operator(mdp: TabularMdp, policy) -> LinearRewardOperator:
    policy = check_policy(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    # P[(s,a), (s',a')] = cont(s'|s,a) * pi(a'|s')
    P = np.einsum("sat,tb->satb", mdp.continuation, policy).reshape(S * A, S * A)
    q = np.linalg.inv(np.eye(S * A) - mdp.gamma * P)
    avg = np.zeros((S, S * A))
    for s in range(S):
        avg[s, s * A:(s + 1) * A] = policy[s]
    return LinearRewardOperator(q, avg @ q, A)


def build_invariance_constraints(mdp: TabularMdp, base_reward, pi_t, feature_map: FeatureMap,
                                 strict_margin: float = None, operator=None):
    """Rows G @ phi <= h encoding A^{pi_t}_{R_phi}(s,a) <= A^{pi_t}_{base}(s,a).

    With ``strict_margin`` the right-hand side becomes -margin for every action
    the (deterministic) target does not take, which makes the target strictly
    optimal but excludes the base reward.
    """
    op = reward_operator(mdp, pi_t) if operator is None else operator
    adv = op.adv
    G = adv @ feature_map.matrix
    h = adv @ np.asarray(base_reward, dtype=float).ravel()
    if strict_margin is not None:
        off_target = (np.asarray(pi_t) == 0).ravel()
        h = np.where(off_target, -strict_margin, h)
    return G, h


@dataclass
class DesignProblem:
    context: InformativenessContext
    feature_map: FeatureMap
    r_max: float = 10.0
    objective: str = "ih1"
    depth: int = 1
    support: list = None
    invariance: bool = True
    strict_margin: float = None
    external_coefficients: np.ndarray = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.objective == "external" and self.external_coefficients is None:
            raise ValueError("external objective needs coefficients")


@dataclass
class LpSolution:
    status: str
    phi: np.ndarray = None
    objective_value: float = float("nan")
    certificate: list = field(default_factory=list)
    iterations: int = 0

    def reward(self, feature_map: FeatureMap) -> np.ndarray:
        return reward_from_phi(ParametricReward(self.phi, feature_map))


def objective_coefficients(ctx: InformativenessContext, feature_map: FeatureMap,
                           objective: str = "ih1", depth: int = 1,
                           external=None) -> np.ndarray:
    """Coefficient vector c with objective(R_phi) = c @ phi."""
    d = feature_map.dim
    if objective == "ih1":
        return feature_map.matrix.T @ h1_coefficients(ctx).ravel()
    if objective == "ih":
        adv_f = h_step_advantage(ctx.mdp, feature_map.features, ctx.learner, depth)
        return np.einsum("sa,sai->i", weights(ctx), adv_f)
    if objective == "constant":
        return np.zeros(d)
    if objective == "external":
        c = np.asarray(external, dtype=float)
        if c.shape != (d,):
            raise ValueError(f"external coefficients must have shape ({d},)")
        return c
    raise ValueError(f"unknown objective {objective!r}")


class RewardDesigner:
    """Holds the (learner-independent) constraint polytope and re-solves it
    for each new learner policy, warm-starting from the last vertex."""

    def __init__(self, mdp: TabularMdp, feature_map: FeatureMap, pi_t, r_max: float = 10.0,
                 objective: str = "ih1", depth: int = 1, support=None, invariance: bool = True,
                 strict_margin: float = None, external_coefficients=None,
                 base_reward=None, tol: float = 1e-9):
        self.mdp, self.feature_map = mdp, feature_map
        self.pi_t = check_policy(mdp, pi_t)
        self.base_reward = mdp.base_reward if base_reward is None else np.asarray(base_reward, float)
        self.r_max, self.objective, self.depth = r_max, objective, depth
        self.external = external_coefficients
        d = feature_map.dim
        self.support = np.arange(d) if support is None else np.array(sorted(set(support)), dtype=int)
        self.target_cache = target_terms(mdp, self.pi_t, self.base_reward)
        if invariance:
            G, h = build_invariance_constraints(mdp, self.base_reward, self.pi_t, feature_map,
                                                strict_margin)
            G = G[:, self.support]
        else:
            G, h = np.zeros((0, len(self.support))), np.zeros(0)
        self.G, self.h = G, h
        k = len(self.support)
        self.solver = SimplexSolver(G, h, np.full(k, -r_max), np.full(k, r_max), tol=tol)

    @classmethod
    def from_problem(cls, problem: DesignProblem) -> "RewardDesigner":
        ctx = problem.context
        return cls(ctx.mdp, problem.feature_map, ctx.target, problem.r_max, problem.objective,
                   problem.depth, problem.support, problem.invariance, problem.strict_margin,
                   problem.external_coefficients, ctx.base_reward)

    def context(self, learner=None, learner_theta=None) -> InformativenessContext:
        return InformativenessContext.build(self.mdp, self.pi_t, learner, self.depth,
                                            self.base_reward, learner_theta, self.target_cache)

    def coefficients(self, ctx: InformativenessContext) -> np.ndarray:
        return objective_coefficients(ctx, self.feature_map, self.objective, self.depth,
                                      self.external)

    def solve(self, ctx: InformativenessContext) -> LpSolution:
        c = self.coefficients(ctx)
        res = self.solver.maximize(c[self.support])
        if res.status != OPTIMAL:
            return LpSolution(res.status, iterations=res.iterations)
        phi = np.zeros(self.feature_map.dim)
        phi[self.support] = res.x
        cert = [(kind, int(self.support[i]) if kind != "row" else i) for kind, i in res.active]
        return LpSolution(OPTIMAL, phi, float(c @ phi), cert, res.iterations)

    def design(self, learner) -> LpSolution:
        return self.solve(self.context(learner))


def solve_design(problem: DesignProblem) -> LpSolution:
    """Exact optimum of one design problem; a fresh solver per call, so the
    result depends only on the problem."""
    return RewardDesigner.from_problem(problem).solve(problem.context)


@dataclass
class InvarianceReport:
    state_pass: np.ndarray
    target_optimal: np.ndarray
    new_optimal_actions: list

    @property
    def passed(self) -> bool:
        return bool(self.state_pass.all())


def verify_policy_invariance(reward, mdp: TabularMdp, pi_t, base_reward=None,
                             tol: float = 1e-9) -> InvarianceReport:
    """Check (per state) that pi_t stays optimal under ``reward`` and that every
    optimal action under ``reward`` is optimal under the base reward.

    ``tol`` is relative to the largest |Q| of the respective problem.
    """
    base_reward = mdp.base_reward if base_reward is None else base_reward
    reward = np.asarray(reward, dtype=float)
    q_new = optimal_values(mdp, reward).q
    q_base = optimal_values(mdp, base_reward).q
    opt_new = argmax_sets(q_new, tol * max(1.0, np.abs(q_new).max()))
    opt_base = argmax_sets(q_base, tol * max(1.0, np.abs(q_base).max()))
    pi_t = np.asarray(pi_t)
    target_opt = np.all(~(pi_t > 0) | opt_new, axis=1)
    contained = np.all(~opt_new | opt_base, axis=1)
    extra = [(int(s), int(a)) for s, a in np.argwhere(opt_new & ~opt_base)]
    return InvarianceReport(target_opt & contained, target_opt, extra)


def design_status_ok(solution: LpSolution) -> bool:
    return solution.status == OPTIMAL


__all__ = [
    "DesignProblem", "INFEASIBLE", "InvarianceReport", "LinearRewardOperator", "LpSolution",
    "OPTIMAL", "RewardDesigner", "build_invariance_constraints", "objective_coefficients",
    "reward_operator", "solve_design", "verify_policy_invariance",
]
