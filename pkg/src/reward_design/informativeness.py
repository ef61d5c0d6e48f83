"""Policy-adaptive informativeness of a reward for a learner, relative to a
target policy.

All expectations are exact sums against occupancy tables. Notation used in
names: ``target_adv`` is the target policy's advantage under the base reward,
``adv_gap`` is that advantage minus its expectation under the learner's
policy, and ``mu_t`` / ``mu_l`` are target / learner state occupancies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import ParametricReward, reward_from_phi
from .learners import LearnerConfig, SoftmaxPolicy, simple_pg_update, softmax
from .mdp import TabularMdp, check_policy, h_step_advantage, h_step_q, occupancy, policy_eval


@dataclass(frozen=True)
class InformativenessContext:
    mdp: TabularMdp
    base_reward: np.ndarray
    target: np.ndarray
    learner: np.ndarray
    depth: int
    target_adv: np.ndarray
    mu_t: np.ndarray
    mu_l: np.ndarray
    learner_theta: np.ndarray = None

    @classmethod
    def build(cls, mdp: TabularMdp, target, learner, depth: int = 1,
              base_reward=None, learner_theta=None, target_cache=None):
        """``target_cache`` = (target_adv, mu_t) skips recomputing target terms."""
        base_reward = mdp.base_reward if base_reward is None else np.asarray(base_reward, float)
        target = check_policy(mdp, target)
        if learner_theta is not None:
            learner_theta = np.asarray(learner_theta, dtype=float)
            learner = softmax(learner_theta)
        learner = check_policy(mdp, learner)
        if target_cache is None:
            target_cache = target_terms(mdp, target, base_reward)
        target_adv, mu_t = target_cache
        mu_l = occupancy(mdp, learner).state
        return cls(mdp, base_reward, target, learner, depth, target_adv, mu_t, mu_l,
                   learner_theta)

    @property
    def learner_state_action(self) -> np.ndarray:
        return self.mu_l[:, None] * self.learner

    @property
    def adv_gap(self) -> np.ndarray:
        expected = np.einsum("sa,sa->s", self.learner, self.target_adv)
        return self.target_adv - expected[:, None]

    def with_learner(self, learner=None, learner_theta=None, depth=None):
        return InformativenessContext.build(
            self.mdp, self.target, learner, self.depth if depth is None else depth,
            self.base_reward, learner_theta, (self.target_adv, self.mu_t))


def target_terms(mdp: TabularMdp, target, base_reward=None):
    base_reward = mdp.base_reward if base_reward is None else base_reward
    adv = policy_eval(mdp, base_reward, target).adv
    return adv, occupancy(mdp, target).state


def _as_reward(reward, ctx: InformativenessContext) -> np.ndarray:
    if isinstance(reward, ParametricReward):
        return reward_from_phi(reward)
    return np.asarray(reward, dtype=float)


def performance_metric(policy, ctx: InformativenessContext) -> float:
    """E_{s ~ mu_t} E_{a ~ policy} [target_adv(s, a)]; zero for the target itself."""
    policy = np.asarray(policy, dtype=float)
    return float(ctx.mu_t @ np.einsum("sa,sa->s", policy, ctx.target_adv))


def weights(ctx: InformativenessContext) -> np.ndarray:
    """mu_l(s,a) * mu_t(s) * pi_l(a|s) * adv_gap(s,a): the per-(s,a) factor
    multiplying the learner's reward advantage."""
    return ctx.learner_state_action * ctx.mu_t[:, None] * ctx.learner * ctx.adv_gap


def informativeness_h(reward, ctx: InformativenessContext, h: int = None) -> float:
    """Informativeness with the learner's depth-h advantage of ``reward``.

    ``h`` counts look-ahead steps, so depth h sums h + 1 rewards; depth 0 is
    the centred reward itself.
    """
    h = ctx.depth if h is None else h
    adv = h_step_advantage(ctx.mdp, _as_reward(reward, ctx), ctx.learner, h)
    w = weights(ctx)
    return np.tensordot(w, adv, axes=([0, 1], [0, 1]))[()]


def informativeness_h1(reward, ctx: InformativenessContext) -> float:
    """Practical one-step criterion: the reward advantage is replaced by the
    learner-centred reward R(s,a) - E_{b ~ pi_l}[R(s,b)]."""
    R = _as_reward(reward, ctx)
    centred = R - np.einsum("sa,sa->s", ctx.learner, R)[:, None]
    return float(np.sum(weights(ctx) * centred))


def informativeness_h1_per_state(reward, ctx: InformativenessContext) -> float:
    """Same value as :func:`informativeness_h1`, summed state by state as
    mu_t(s) mu_l(s) sum_a pi_l(a|s)^2 adv_gap(s,a) (R(s,a) - R(s, pi_l))."""
    R = _as_reward(reward, ctx)
    total = 0.0
    for s in range(ctx.mdp.n_states):
        pi = ctx.learner[s]
        a_gap = ctx.target_adv[s] - pi @ ctx.target_adv[s]
        r_gap = R[s] - pi @ R[s]
        total += ctx.mu_t[s] * ctx.mu_l[s] * np.sum(pi ** 2 * a_gap * r_gap)
    return float(total)


def z_values(ctx: InformativenessContext) -> np.ndarray:
    """Z(s,a) = pi_l(a|s) adv_gap(s,a) - sum_b pi_l(b|s)^2 adv_gap(s,b).

    The one-step criterion equals sum_{s,a} mu_t(s) mu_l(s) pi_l(a|s) Z(s,a) R(s,a).
    """
    pi, gap = ctx.learner, ctx.adv_gap
    return pi * gap - np.einsum("sa,sa->s", pi ** 2, gap)[:, None]


def h1_coefficients(ctx: InformativenessContext) -> np.ndarray:
    """Linear coefficients of the one-step criterion in R(s, a)."""
    return (ctx.mu_t * ctx.mu_l)[:, None] * ctx.learner * z_values(ctx)


def bangbang_design(ctx: InformativenessContext, r_max: float, zero_prob_actions: str = "sign",
                    zero_tol: float = 0.0) -> np.ndarray:
    """Box-constrained maximizer of the one-step criterion: +r_max where
    Z >= 0, -r_max elsewhere.

    ``zero_tol`` treats |Z| <= zero_tol as zero. The objective ignores actions
    the learner never takes; ``zero_prob_actions="penalize"`` assigns them
    -r_max (keeps eliminated actions eliminated) instead of applying the
    sign rule.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if zero_prob_actions not in ("sign", "penalize"):
        raise ValueError(f"unknown zero_prob_actions mode {zero_prob_actions!r}")
    z = z_values(ctx)
    z = np.where(np.abs(z) <= zero_tol, 0.0, z)
    R = np.where(z >= 0, r_max, -r_max)
    if zero_prob_actions == "penalize":
        R = np.where(ctx.learner == 0, -r_max, R)
    return R


def _theta(ctx: InformativenessContext) -> np.ndarray:
    if ctx.learner_theta is not None:
        return ctx.learner_theta
    return SoftmaxPolicy.from_probs(ctx.learner).theta


def bilevel_informativeness(pr: ParametricReward, ctx: InformativenessContext,
                            learner: LearnerConfig) -> float:
    """Target-relative performance after one simple policy-gradient step on R_phi."""
    if learner.kind != "simple_pg":
        raise ValueError("the bi-level criterion is defined for the simple_pg learner")
    theta = np.array(_theta(ctx), copy=True)
    new = simple_pg_update(SoftmaxPolicy(theta), ctx.mdp, reward_from_phi(pr),
                           learner.alpha, learner.h)
    return performance_metric(new.probs, ctx)


def prop1_gradient(pr: ParametricReward, ctx: InformativenessContext, alpha: float) -> np.ndarray:
    """Closed-form approximate gradient of the bi-level criterion w.r.t. phi.

    alpha * sum_{s,a} weights(s,a) * A_h[f_i](s,a): the depth-h learner
    advantage of each feature column, weighted as in the criterion. The
    result does not depend on phi because the criterion is linear in R.
    """
    F = pr.feature_map.features
    adv_f = h_step_advantage(ctx.mdp, F, ctx.learner, ctx.depth)
    return alpha * np.einsum("sa,sai->i", weights(ctx), adv_f)


def meta_gradient_terms(pr: ParametricReward, ctx: InformativenessContext, alpha: float):
    """The two factors of the chain rule, built from their raw definitions.

    Returns ``(d_theta_d_phi, d_perf_d_theta)`` with shapes (d, S*A) and (S*A,):
    the Jacobian of the learner update with respect to phi (through depth-h
    Q-values and the log-softmax gradient) and the gradient of the
    performance metric at the current logits (through the softmax Jacobian).
    Their product reproduces :func:`prop1_gradient`.
    """
    S, A = ctx.mdp.n_states, ctx.mdp.n_actions
    pi = ctx.learner
    eye = np.eye(A)
    # dlog pi(a|s) / dtheta(s,b) = delta_ab - pi(b|s)
    dlog = eye[None, :, :] - pi[:, None, :]
    q_f, _ = h_step_q(ctx.mdp, pr.feature_map.features, pi, ctx.depth)
    mu_sa = ctx.learner_state_action
    term1 = alpha * np.einsum("sa,sai,sab->isb", mu_sa, q_f, dlog).reshape(-1, S * A)
    # dpi(a|s) / dtheta(s,b) = pi(a|s) (delta_ab - pi(b|s))
    dpi = pi[:, :, None] * dlog
    term2 = np.einsum("s,sa,sab->sb", ctx.mu_t, ctx.target_adv, dpi).reshape(S * A)
    return term1, term2
