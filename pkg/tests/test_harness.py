import numpy as np
import pytest

from reward_design.designer import verify_policy_invariance
from reward_design.envs import build_linek, target_policy
from reward_design.harness import (DesignerConfig, EvalRow, RunRecord, TrainingConfig,
                                   compare_runs, distinct_advantage_instance, final_window_mean,
                                   run_rng, run_technique, theorem1_experiment, theorem1_suite)
from reward_design.learners import LearnerConfig
from reward_design.mdp import TabularMdp, finite_horizon_return


@pytest.fixture(scope="module")
def linek():
    mdp, fmap = build_linek()
    return mdp, fmap, target_policy(mdp)


def short_cfg(**kw):
    base = dict(episodes=40, eval_period=10, learner=LearnerConfig(alpha=0.05, baseline=True))
    base.update(kw)
    return TrainingConfig(**base)


def fake_record(technique, curve, target=10.0, episodes=100, period=10):
    rows = [EvalRow(k * period, v, 0.0, float("nan"), "") for k, v in enumerate(curve)]
    return RunRecord(technique, 0, rows, target, 0, {"config": {"episodes": episodes}},
                     final_policy=np.zeros((1, 1)))


class TestTrainingConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            TrainingConfig(n_r=0)
        with pytest.raises(ValueError):
            TrainingConfig(eval_mode="mc")
        with pytest.raises(ValueError):
            TrainingConfig(initial_reward="zero")

    def test_dict_blocks(self):
        cfg = TrainingConfig(learner={"alpha": 0.1}, designer={"r_max": 2.0})
        assert cfg.learner.alpha == 0.1 and cfg.designer.r_max == 2.0


class TestSeeds:
    def test_streams_independent_and_reproducible(self):
        a = run_rng(0, 3, "rollout").random(4)
        assert np.array_equal(a, run_rng(0, 3, "rollout").random(4))
        assert not np.array_equal(a, run_rng(0, 3, "eval").random(4))
        assert not np.array_equal(a, run_rng(0, 4, "rollout").random(4))


class TestRunTechnique:
    def test_adaptive_without_redesign_equals_orig(self, linek):
        mdp, fmap, pi_t = linek
        cfg = short_cfg(n_r=41, initial_reward="base")
        adaptive = run_technique("adaptive", mdp, fmap, pi_t, cfg, 2)
        orig = run_technique("orig", mdp, fmap, pi_t, cfg, 2)
        assert adaptive.n_designs == 0
        assert np.array_equal(adaptive.mean_J, orig.mean_J)
        assert np.array_equal(adaptive.final_policy, orig.final_policy)

    @pytest.mark.parametrize("mode,expected", [("base", 2), ("design", 3)])
    def test_design_count(self, linek, mode, expected):
        mdp, fmap, pi_t = linek
        rec = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(episodes=10, n_r=5,
                                                                   initial_reward=mode))
        assert rec.n_designs == expected

    def test_deterministic(self, linek):
        mdp, fmap, pi_t = linek
        a = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(), 1)
        b = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(), 1)
        assert a.fingerprint() == b.fingerprint()
        c = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(master_seed=1), 1)
        assert c.fingerprint() != a.fingerprint()

    @pytest.mark.parametrize("tech", ["orig", "invar"])
    def test_fixed_rewards_constant(self, linek, tech):
        mdp, fmap, pi_t = linek
        rec = run_technique(tech, mdp, fmap, pi_t, short_cfg())
        assert rec.n_designs == 0 and len({r.reward_hash for r in rec.rows}) == 1

    def test_external_with_base_equals_orig(self, linek):
        mdp, fmap, pi_t = linek
        ext = run_technique("external", mdp, fmap, pi_t, short_cfg(), 0,
                            external_reward=mdp.base_reward)
        orig = run_technique("orig", mdp, fmap, pi_t, short_cfg(), 0)
        assert ext.fingerprint() == orig.fingerprint()

    def test_invar_reward_is_invariant(self, linek):
        from reward_design.harness import invar_reward
        mdp, fmap, pi_t = linek
        R = invar_reward(mdp, fmap, pi_t, DesignerConfig(), 10.0)
        assert verify_policy_invariance(R, mdp, pi_t).passed

    def test_designs_verified(self, linek):
        mdp, fmap, pi_t = linek
        rec = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(verify_designs=True,
                                                                   snapshot_period=10))
        assert rec.n_designs > 1
        for _, reward, _ in rec.snapshots:
            assert verify_policy_invariance(reward, mdp, pi_t).passed

    def test_target_return_exact(self, linek):
        mdp, fmap, pi_t = linek
        rec = run_technique("orig", mdp, fmap, pi_t, short_cfg(episodes=0))
        assert rec.target_return == finite_horizon_return(mdp, mdp.base_reward, pi_t)
        assert len(rec.rows) == 1

    def test_stop_fraction(self, linek):
        mdp, fmap, pi_t = linek
        rec = run_technique("orig", mdp, fmap, pi_t, short_cfg(episodes=100, stop_fraction=-1e9))
        assert rec.rows[-1].episode == 10

    def test_unknown_technique(self, linek):
        mdp, fmap, pi_t = linek
        with pytest.raises(ValueError):
            run_technique("shaping", mdp, fmap, pi_t, short_cfg())
        with pytest.raises(ValueError):
            run_technique("external", mdp, fmap, pi_t, short_cfg())

    @pytest.mark.parametrize("kind", ["simple_pg", "greedy"])
    def test_other_learners(self, linek, kind):
        mdp, fmap, pi_t = linek
        rec = run_technique("adaptive", mdp, fmap, pi_t, short_cfg(
            learner=LearnerConfig(kind=kind, alpha=0.5)))
        assert np.isfinite(rec.mean_J).all()


def one_state_mdp(rewards):
    A = len(rewards)
    T = np.ones((1, A, 1))
    return TabularMdp(T, np.ones(1), 0.9, 5, np.array([rewards], float),
                      np.ones((1, A), dtype=bool))


class TestConvergence:
    def test_two_actions_one_round(self):
        mdp = one_state_mdp([1.0, 0.0])
        rep = theorem1_experiment(mdp, np.array([[1.0, 0.0]]), 1.0)
        assert rep.passed and rep.converged_round == 1

    def test_worst_case_needs_a_minus_one_rounds(self):
        # each round only drops the single action below the support mean
        mdp = one_state_mdp([0.0, -1.0, -10.0, -100.0])
        rep = theorem1_experiment(mdp, np.array([[1.0, 0, 0, 0]]), 1.0)
        assert rep.converged_round == 3
        assert [s[0].tolist() for s in rep.supports] == [
            [True, True, True, False], [True, True, False, False], [True, False, False, False]]

    def test_supports_shrink_and_keep_target(self):
        for rep in theorem1_suite(n_mdps=20, seed=3):
            assert rep.passed
            for prev, cur in zip(rep.supports, rep.supports[1:]):
                assert np.all(prev >= cur)
            assert np.all(rep.supports[-1] == rep.target_support)

    def test_instance_has_distinct_advantages(self):
        mdp, pi_t = distinct_advantage_instance(np.random.default_rng(0), min_actions=4,
                                                max_actions=4)
        assert mdp.n_actions == 4


class TestCompareRuns:
    def test_identical_curves_identical_stats(self):
        s = compare_runs([fake_record("a", [0, 5, 10]), fake_record("b", [0, 5, 10])])
        assert s["a"].median == s["b"].median == 20

    def test_censored(self):
        s = compare_runs([fake_record("a", [0, 1, 2]), fake_record("a", [0, 9, 9])])
        assert s["a"].n_censored == 1 and s["a"].episodes == [None, 10]
        assert s["a"].censored_value == 101 and s["a"].median == pytest.approx(55.5)

    def test_monotone_in_speed(self):
        fast = fake_record("fast", [0, 9, 10, 10])
        slow = fake_record("slow", [0, 1, 5, 9.5])
        s = compare_runs([fast, slow])
        assert s["fast"].median < s["slow"].median

    def test_final_window_mean(self):
        rec = fake_record("a", [0, 1, 2, 3, 4])
        assert final_window_mean(rec, 20) == pytest.approx(3.5)
