import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reward_design import oracles
from reward_design.envs import FeatureMap, ParametricReward, target_policy
from reward_design.informativeness import (InformativenessContext, bangbang_design,
                                           bilevel_informativeness, h1_coefficients,
                                           informativeness_h, informativeness_h1,
                                           informativeness_h1_per_state, meta_gradient_terms,
                                           performance_metric, prop1_gradient, z_values)
from reward_design.learners import LearnerConfig
from reward_design.mdp import TabularMdp, random_mdp, uniform_policy
from reward_design.verify import gradient_relative_errors, random_context, tabular_features

seeds = st.integers(0, 2**31 - 1)


def context_from(seed, S=4, A=3, depth=1):
    return random_context(np.random.default_rng(seed), S, A, depth)


class TestPerformanceMetric:
    def test_target_scores_zero(self, rng):
        ctx = random_context(rng)
        assert performance_metric(ctx.target, ctx) == pytest.approx(0.0, abs=1e-12)

    def test_argmax_beats_all_deterministic(self, rng):
        mdp = random_mdp(rng, 4, 3)
        ctx = InformativenessContext.build(mdp, target_policy(mdp), uniform_policy(4, 3))
        best = np.zeros((4, 3))
        best[np.arange(4), ctx.target_adv.argmax(axis=1)] = 1
        top = performance_metric(best, ctx)
        for pi in oracles.deterministic_policies(4, 3):
            assert top >= performance_metric(pi, ctx) - 1e-12

    def test_symmetric_advantages(self):
        mdp = TabularMdp(np.ones((1, 2, 1)), np.ones(1), 0.5, 10, np.array([[1.0, -1.0]]))
        ctx = InformativenessContext.build(mdp, uniform_policy(1, 2), uniform_policy(1, 2))
        assert ctx.target_adv.tolist() == [[1.0, -1.0]]
        assert performance_metric(uniform_policy(1, 2), ctx) == 0.0


class TestInformativenessH:
    def test_constant_reward(self, rng):
        ctx = random_context(rng, depth=2)
        assert informativeness_h(np.full((4, 3), 5.0), ctx) == pytest.approx(0.0, abs=1e-12)

    def test_aligned_policies(self, rng):
        mdp = random_mdp(rng, 4, 3)
        pi_t = target_policy(mdp)
        ctx = InformativenessContext.build(mdp, pi_t, pi_t, 2)
        assert informativeness_h(rng.normal(size=(4, 3)), ctx) == pytest.approx(0.0, abs=1e-12)

    def test_summation_oracle(self):
        # frozen from oracles.summed_informativeness on this seeded instance
        ctx = context_from(2024, depth=2)
        R = np.random.default_rng(7).normal(size=(4, 3))
        assert informativeness_h(R, ctx) == pytest.approx(-0.0037907405773221774, abs=1e-14)
        assert informativeness_h(R, ctx) == pytest.approx(
            oracles.summed_informativeness(R, ctx, 2), abs=1e-14)

    def test_depth_zero_is_centred_form(self):
        ctx = context_from(2024, depth=2)
        R = np.random.default_rng(7).normal(size=(4, 3))
        assert informativeness_h(R, ctx, 0) == pytest.approx(-0.003864917522028386, abs=1e-14)
        assert informativeness_h(R, ctx, 0) == pytest.approx(informativeness_h1(R, ctx), abs=1e-15)

    def test_accepts_parametric_reward(self, rng):
        ctx = random_context(rng)
        fmap = tabular_features(4, 3)
        phi = rng.normal(size=12)
        assert informativeness_h(ParametricReward(phi, fmap), ctx) == pytest.approx(
            informativeness_h(phi.reshape(4, 3), ctx))


class TestInformativenessH1:
    def test_constant(self, rng):
        assert informativeness_h1(np.full((4, 3), -2.0), random_context(rng)) == pytest.approx(
            0.0, abs=1e-15)

    def test_state_offset_invariance(self, rng):
        ctx = random_context(rng)
        R = rng.normal(size=(4, 3))
        offset = rng.normal(size=(4, 1))
        assert informativeness_h1(R + offset, ctx) == pytest.approx(
            informativeness_h1(R, ctx), abs=1e-14)

    def test_dual_form_5x3(self, rng):
        ctx = random_context(rng, 5, 3)
        R = rng.normal(size=(5, 3))
        assert abs(informativeness_h1(R, ctx) - informativeness_h1_per_state(R, ctx)) <= 1e-10

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(2, 4))
    def test_dual_form_property(self, seed, S, A):
        rng = np.random.default_rng(seed)
        ctx = random_context(rng, S, A)
        R = rng.normal(scale=10, size=(S, A))
        assert abs(informativeness_h1(R, ctx) - informativeness_h1_per_state(R, ctx)) <= 1e-10

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        ctx = random_context(rng)
        R1, R2 = rng.normal(size=(2, 4, 3))
        lhs = informativeness_h1(a * R1 + b * R2, ctx)
        rhs = a * informativeness_h1(R1, ctx) + b * informativeness_h1(R2, ctx)
        assert abs(lhs - rhs) <= 1e-9


class TestZValues:
    def test_uniform_learner(self, rng):
        mdp = random_mdp(rng, 4, 3)
        ctx = InformativenessContext.build(mdp, target_policy(mdp), uniform_policy(4, 3))
        adv = ctx.target_adv
        assert np.allclose(z_values(ctx), (adv - adv.mean(axis=1, keepdims=True)) / 3, atol=1e-15)

    def test_deterministic_row_is_zero(self, rng):
        mdp = random_mdp(rng, 3, 3)
        learner = uniform_policy(3, 3)
        learner[1] = [0.0, 1.0, 0.0]
        ctx = InformativenessContext.build(mdp, target_policy(mdp), learner)
        assert np.all(z_values(ctx)[1] == 0)
        assert np.all(bangbang_design(ctx, 2.0)[1] == 2.0)

    def test_finite_difference_coefficients(self, rng):
        ctx = random_context(rng)
        fd = oracles.central_difference(lambda r: informativeness_h1(r.reshape(4, 3), ctx),
                                        np.zeros(12), 1.0).reshape(4, 3)
        assert np.allclose(fd, h1_coefficients(ctx), atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(2, 5))
    def test_zero_mean_and_consistency(self, seed, S, A):
        rng = np.random.default_rng(seed)
        ctx = random_context(rng, S, A)
        z = z_values(ctx)
        assert np.abs((ctx.learner * z).sum(axis=1)).max() <= 1e-9
        R = rng.normal(size=(S, A))
        centred = R - (ctx.learner * R).sum(axis=1, keepdims=True)
        c = h1_coefficients(ctx)
        assert abs(np.sum(c * R) - informativeness_h1(R, ctx)) <= 1e-10
        assert abs(np.sum(c * centred) - informativeness_h1(centred, ctx)) <= 1e-10


class TestBangBang:
    def test_three_state_exhaustive(self, rng):
        ctx = random_context(rng, 3, 3)
        R = bangbang_design(ctx, 1.0)
        best, _ = oracles.exhaustive_box_max(lambda r: informativeness_h1(r, ctx), (3, 3), 1.0)
        assert informativeness_h1(R, ctx) >= best - 1e-12

    def test_sign_invariance(self, rng):
        ctx = random_context(rng)
        scaled = InformativenessContext.build(
            ctx.mdp, ctx.target, ctx.learner, 1,
            target_cache=(3.7 * ctx.target_adv, ctx.mu_t))
        assert np.array_equal(bangbang_design(ctx, 1.0), bangbang_design(scaled, 1.0))

    def test_penalize_mode(self, rng):
        mdp = random_mdp(rng, 3, 3)
        learner = uniform_policy(3, 3)
        learner[0] = [0.5, 0.5, 0.0]
        ctx = InformativenessContext.build(mdp, target_policy(mdp), learner)
        R = bangbang_design(ctx, 1.0, zero_prob_actions="penalize")
        assert R[0, 2] == -1.0
        assert np.array_equal(R[1:], bangbang_design(ctx, 1.0)[1:])

    def test_bad_args(self, rng):
        ctx = random_context(rng)
        with pytest.raises(ValueError):
            bangbang_design(ctx, 0.0)
        with pytest.raises(ValueError):
            bangbang_design(ctx, 1.0, zero_prob_actions="other")

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.sampled_from([(2, 2), (2, 3), (3, 2), (3, 3), (4, 3), (2, 5), (6, 2)]))
    def test_attains_box_maximum(self, seed, shape):
        ctx = random_context(np.random.default_rng(seed), *shape)
        best, _ = oracles.exhaustive_box_max(lambda r: informativeness_h1(r, ctx), shape, 2.0)
        assert best - informativeness_h1(bangbang_design(ctx, 2.0), ctx) <= 1e-9


class TestBilevel:
    def setup_method(self):
        self.ctx = context_from(11)
        self.fmap = tabular_features(4, 3)
        self.learner = LearnerConfig(kind="simple_pg", alpha=1e-3, h=1)

    def test_zero_step(self):
        pr = ParametricReward(np.random.default_rng(0).normal(size=12), self.fmap)
        lc = LearnerConfig(kind="simple_pg", alpha=0.0, h=1)
        assert bilevel_informativeness(pr, self.ctx, lc) == pytest.approx(
            performance_metric(self.ctx.learner, self.ctx), abs=1e-15)

    def test_zero_reward(self):
        pr = ParametricReward(np.zeros(12), self.fmap)
        assert bilevel_informativeness(pr, self.ctx, self.learner) == pytest.approx(
            performance_metric(self.ctx.learner, self.ctx), abs=1e-15)

    def test_ascent_along_gradient(self):
        pr = ParametricReward(np.zeros(12), self.fmap)
        g = prop1_gradient(pr, self.ctx, 1e-3)
        base = bilevel_informativeness(pr, self.ctx, self.learner)
        moved = bilevel_informativeness(ParametricReward(g / np.linalg.norm(g), self.fmap),
                                        self.ctx, self.learner)
        assert moved > base

    def test_does_not_mutate_context(self):
        before = self.ctx.learner.copy()
        bilevel_informativeness(ParametricReward(np.ones(12), self.fmap), self.ctx, self.learner)
        assert np.array_equal(before, self.ctx.learner)

    def test_needs_simple_pg(self):
        with pytest.raises(ValueError):
            bilevel_informativeness(ParametricReward(np.zeros(12), self.fmap), self.ctx,
                                    LearnerConfig(kind="reinforce"))


class TestProp1Gradient:
    def test_constant_feature(self, rng):
        ctx = random_context(rng)
        fmap = FeatureMap(np.ones((4, 3, 1)))
        assert np.allclose(prop1_gradient(ParametricReward(np.ones(1), fmap), ctx, 1e-3), 0,
                           atol=1e-15)

    def test_aligned_policies(self, rng):
        mdp = random_mdp(rng, 4, 3)
        pi_t = target_policy(mdp)
        ctx = InformativenessContext.build(mdp, pi_t, pi_t)
        g = prop1_gradient(ParametricReward(np.zeros(12), tabular_features(4, 3)), ctx, 1e-3)
        assert np.all(g == 0)

    @pytest.mark.parametrize("depth", [1, 2])
    def test_chain_rule_terms(self, depth):
        ctx = context_from(5, depth=depth)
        pr = ParametricReward(np.zeros(12), tabular_features(4, 3))
        t1, t2 = meta_gradient_terms(pr, ctx, 1e-3)
        assert np.allclose(t1 @ t2, prop1_gradient(pr, ctx, 1e-3), rtol=1e-10, atol=1e-18)

    @pytest.mark.parametrize("depth", [1, 2])
    def test_finite_differences(self, depth):
        rng = np.random.default_rng(depth)
        ctx = random_context(rng, 4, 3, depth)
        fmap = tabular_features(4, 3)
        errs = gradient_relative_errors(ctx, fmap, [1e-2, 1e-3, 1e-4])
        assert errs[1] <= 1e-3
        assert errs[0] > errs[1] > errs[2]

    def test_linear_in_alpha(self, rng):
        ctx = random_context(rng)
        pr = ParametricReward(np.zeros(12), tabular_features(4, 3))
        assert np.allclose(prop1_gradient(pr, ctx, 2e-3), 2 * prop1_gradient(pr, ctx, 1e-3))
