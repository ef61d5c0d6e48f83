import numpy as np
import pytest

from reward_design.envs import build_linek, build_room
from reward_design.formats import (FormatError, dump_mdp, dump_table, lp_problem_dict,
                                   lp_problem_from_dict, lp_solution_dict, parse_mdp,
                                   parse_table, read_convergence_csv, read_json, start_run_dir,
                                   write_convergence_csv, write_run)
from reward_design.harness import EvalRow, TrainingConfig, run_technique
from reward_design.envs import target_policy
from reward_design.mdp import random_mdp
from reward_design.simplex import linprog_max


class TestMdpFormat:
    @pytest.mark.parametrize("builder", [build_room, build_linek])
    def test_roundtrip_envs(self, builder):
        mdp, _ = builder()
        back = parse_mdp(dump_mdp(mdp))
        assert np.array_equal(back.transition, mdp.transition)
        assert np.array_equal(back.base_reward, mdp.base_reward)
        assert np.array_equal(back.terminal_mask, mdp.terminal_mask)
        assert back.gamma == mdp.gamma and back.horizon == mdp.horizon
        assert back.state_names == mdp.state_names

    def test_roundtrip_random_floats(self, rng):
        mdp = random_mdp(rng, 4, 3, terminal_prob=0.3)
        back = parse_mdp(dump_mdp(mdp))
        assert np.array_equal(back.transition, mdp.transition)
        assert np.array_equal(back.initial_dist, mdp.initial_dist)

    def test_errors(self, rng):
        text = dump_mdp(random_mdp(rng, 2, 2))
        with pytest.raises(FormatError):
            parse_mdp(text.replace("# ", "#", 1))
        with pytest.raises(FormatError):
            parse_mdp(text.replace("[reward]", "[rewards]"))
        with pytest.raises(FormatError):
            parse_mdp("\n".join(ln for ln in text.splitlines() if not ln.startswith("1 1 :")))
        with pytest.raises(FormatError):
            parse_mdp(text.replace("gamma", "discount"))

    def test_invalid_kernel_rejected(self, rng):
        text = dump_mdp(random_mdp(rng, 2, 2)).replace("[initial]\n", "[initial]\n2 ")
        with pytest.raises((FormatError, ValueError)):
            parse_mdp(text)


class TestTableFormat:
    def test_roundtrip(self, rng):
        table = rng.normal(size=(3, 2))
        kind, back, states, actions = parse_table(dump_table(table, "reward", ["x", "y", "z"],
                                                             ["l", "r"]))
        assert kind == "reward" and np.array_equal(back, table)
        assert states == ["x", "y", "z"] and actions == ["l", "r"]

    def test_bad_header(self):
        with pytest.raises(FormatError):
            parse_table("state\ta0\n0\t1.0\n")


class TestLpFormat:
    def test_roundtrip(self, rng):
        A = rng.normal(size=(4, 3))
        d = lp_problem_dict(np.ones(3), A, np.ones(4), -np.ones(3), np.ones(3))
        c, A2, b, lo, up = lp_problem_from_dict(d)
        assert np.array_equal(A2, A) and np.array_equal(up, np.ones(3))
        res = linprog_max(c, A2, b, lo, up)
        out = lp_solution_dict(res)
        assert out["status"] == "optimal" and out["objective"] == res.objective

    def test_wrong_tag(self):
        with pytest.raises(FormatError):
            lp_problem_from_dict({"format": "other", "c": [1.0]})


class TestRunFiles:
    def test_convergence_roundtrip(self, tmp_path):
        rows = [EvalRow(0, -1.5, 0.0, float("nan"), "abc"), EvalRow(100, 2.25, 0.1, 3.0, "def")]
        write_convergence_csv(tmp_path / "c.csv", rows)
        back = read_convergence_csv(tmp_path / "c.csv")
        assert [r.episode for r in back] == [0, 100] and back[1].mean_J == 2.25
        assert np.isnan(back[0].objective)

    def test_convergence_bad_tag(self, tmp_path):
        (tmp_path / "c.csv").write_text("episode,mean_J\n")
        with pytest.raises(FormatError):
            read_convergence_csv(tmp_path / "c.csv")

    def test_manifest_first(self, tmp_path):
        path = start_run_dir(tmp_path / "run", {"seed": 1})
        assert [p.name for p in path.iterdir()] == ["manifest.json"]
        assert read_json(path / "manifest.json") == {"seed": 1}

    def test_write_run(self, tmp_path):
        mdp, fmap = build_linek()
        rec = run_technique("adaptive", mdp, fmap, target_policy(mdp),
                            TrainingConfig(episodes=20, eval_period=10, snapshot_period=10))
        path = write_run(tmp_path / "r", rec, mdp)
        assert read_json(path / "record.json")["fingerprint"] == rec.fingerprint()
        assert len(read_convergence_csv(path / "convergence.csv")) == 3
        assert (path / "snapshots" / "reward_10.tsv").exists()
        assert read_json(path / "manifest.json")["technique"] == "adaptive"
