import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reward_design.envs import (LINEK_ACTIONS, FeatureMap, LineKConfig, MapParseError,
                                ParametricReward, RoomConfig, abstraction_features, build_linek,
                                build_room, default_room_map, linek_policy_family, linek_state,
                                parse_room_map, perturbed_initial_policy, phi_for_reward,
                                reward_from_phi, room_gate_states, room_policy_family,
                                target_policy)
from reward_design.mdp import deterministic_policy, finite_horizon_return, uniform_policy

TINY_MAP = """
#####
#S .0
#   #
#.#G1
#####
"""


class TestRoom:
    def setup_method(self):
        self.mdp, self.fmap = build_room()

    def test_sizes(self):
        assert self.mdp.n_states == 81 and self.mdp.n_actions == 4
        assert self.fmap.dim == 40

    def test_one_hot(self):
        assert self.fmap.is_partition()

    def test_kernel_rows(self):
        assert np.abs(self.mdp.transition.sum(axis=2) - 1).max() <= 1e-12

    def test_defaults(self):
        assert self.mdp.gamma == 0.95 and self.mdp.horizon == 30
        assert self.mdp.base_reward.max() == 10.0

    def test_single_rewarded_pair_is_goal_right(self):
        s, a = np.argwhere(self.mdp.base_reward != 0)[0]
        assert (self.mdp.base_reward != 0).sum() == 1
        assert a == 3 and self.mdp.state_names[s] == "(0,8)"
        assert self.mdp.terminal_mask[s, a]

    def test_terminal_walls(self):
        # bottom-left corner terminates on left and down, goal on right
        bl = self.mdp.state_names.index("(8,0)")
        assert self.mdp.terminal_mask[bl].tolist() == [False, True, True, False]
        assert self.mdp.terminal_mask.sum() == 3

    def test_noise(self):
        s = self.mdp.state_names.index("(4,4)")
        right = self.mdp.state_names.index("(4,5)")
        assert self.mdp.transition[s, 3, right] == pytest.approx(0.95)
        up = self.mdp.state_names.index("(3,4)")
        assert self.mdp.transition[s, 3, up] == pytest.approx(0.05 / 3)

    def test_wall_blocks(self):
        # (0,5) has a wall on its right
        s = self.mdp.state_names.index("(0,5)")
        assert self.mdp.transition[s, 3, s] == pytest.approx(0.95 + 0.05 / 3)

    def test_goal_reachable_noiseless(self):
        mdp, _ = build_room(RoomConfig(p_rand=0.0))
        J = finite_horizon_return(mdp, mdp.base_reward, target_policy(mdp))
        assert J > 0

    def test_base_reward_expressible(self):
        phi = phi_for_reward(self.mdp.base_reward, self.fmap)
        assert phi is not None
        assert np.array_equal(reward_from_phi(ParametricReward(phi, self.fmap)),
                              self.mdp.base_reward)

    def test_gate_states_are_doorway_cells(self):
        gates = room_gate_states()
        assert len(gates) == 8
        assert len(room_policy_family().designated) == 5

    def test_map_file_shipped(self):
        assert "S" in default_room_map() and "G" in default_room_map()


class TestRoomMapParsing:
    def test_tiny_map(self):
        room = parse_room_map(TINY_MAP)
        assert (room.n_rows, room.n_cols) == (2, 2)
        assert room.start == (0, 0) and room.goal == (1, 1)
        assert room.terminal[0, 1, 3] and room.terminal[1, 1, 3]
        assert room.blocked[1, 0, 3] and not room.blocked[0, 0, 3]

    def test_custom_map_builds(self):
        mdp, fmap = build_room(RoomConfig(map_text=TINY_MAP, block_size=1))
        assert mdp.n_states == 4 and fmap.dim == 5 * 4

    def test_second_start_located(self):
        bad = TINY_MAP.replace("#.#G1", "#S#G1")
        with pytest.raises(MapParseError, match="line 4, column 2"):
            parse_room_map(bad)

    def test_open_boundary(self):
        bad = TINY_MAP.replace("#S .0", " S .0")
        with pytest.raises(MapParseError, match="open boundary"):
            parse_room_map(bad)

    def test_goal_needs_terminal_right(self):
        with pytest.raises(MapParseError, match="right of 'G'"):
            parse_room_map(TINY_MAP.replace("G1", "G#"))

    def test_unknown_char(self):
        with pytest.raises(MapParseError, match="unknown cell"):
            parse_room_map(TINY_MAP.replace("#.#G1", "#x#G1"))

    def test_even_size(self):
        with pytest.raises(MapParseError, match="odd"):
            parse_room_map("#####\n#S G1\n#####\n#####")


class TestLineK:
    def setup_method(self):
        self.mdp, self.fmap = build_linek()

    def test_sizes(self):
        assert self.fmap.dim == 15 and self.mdp.n_actions == 3
        assert self.mdp.n_states == 20

    def test_one_hot(self):
        assert self.fmap.is_partition()

    def test_pick_with_key_keeps_state(self):
        s = linek_state(4, True, 10)
        assert self.mdp.transition[s, 2, s] == pytest.approx(0.9)

    def test_pick_elsewhere_does_nothing(self):
        s = linek_state(4, False, 10)
        assert self.mdp.transition[s, 2, s] == pytest.approx(0.9)

    def test_hand_enumerated_kernel(self):
        mdp, _ = build_linek(LineKConfig(n_nodes=4, key_node=1, start_node=2))
        nk = lambda n: linek_state(n, False, 4)
        k = lambda n: linek_state(n, True, 4)
        expected = {
            (nk(3), 1): {nk(3): 0.95, nk(2): 0.05},     # right at the end without key
            (nk(1), 2): {k(1): 0.9, nk(0): 0.05, nk(2): 0.05},   # pick at the key node
            (nk(0), 0): {nk(0): 0.95, nk(1): 0.05},
            (k(3), 1): {k(3): 0.95, k(2): 0.05},
        }
        for (s, a), row in expected.items():
            want = np.zeros(8)
            for s2, p in row.items():
                want[s2] = p
            assert np.allclose(mdp.transition[s, a], want, atol=1e-15)
        assert mdp.base_reward[nk(3), 1] == 0 and not mdp.terminal_mask[nk(3), 1]
        assert mdp.base_reward[k(3), 1] == 10 and mdp.terminal_mask[k(3), 1]
        assert (mdp.base_reward != 0).sum() == 1

    def test_invalid_geometry(self):
        with pytest.raises(ValueError):
            build_linek(LineKConfig(n_nodes=2))
        with pytest.raises(ValueError):
            build_linek(LineKConfig(key_node=9))

    def test_base_reward_expressible(self):
        assert phi_for_reward(self.mdp.base_reward, self.fmap) is not None

    def test_target_fetches_key(self):
        pi = target_policy(self.mdp)
        start = linek_state(5, False, 10)
        assert LINEK_ACTIONS[pi[start].argmax()] == "left"
        assert LINEK_ACTIONS[pi[linek_state(2, False, 10)].argmax()] == "pick"


class TestRewardFromPhi:
    def test_zero(self):
        _, fmap = build_room()
        assert np.all(reward_from_phi(ParametricReward(np.zeros(40), fmap)) == 0)

    def test_indicator(self):
        _, fmap = build_room()
        phi = np.zeros(40)
        phi[7] = 2.5
        R = reward_from_phi(ParametricReward(phi, fmap))
        assert np.array_equal(R != 0, fmap.features[:, :, 7] == 1)
        assert np.all(R[R != 0] == 2.5)

    def test_dot_product_oracle(self, rng):
        _, fmap = build_room()
        phi = rng.normal(size=40)
        R = reward_from_phi(ParametricReward(phi, fmap))
        for s in range(81):
            for a in range(4):
                assert R[s, a] == pytest.approx(sum(phi[i] * fmap.features[s, a, i]
                                                    for i in range(40)), abs=1e-12)

    def test_dimension_mismatch(self):
        _, fmap = build_room()
        with pytest.raises(ValueError):
            reward_from_phi(ParametricReward(np.zeros(39), fmap))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=15, max_size=15),
           st.lists(st.floats(-10, 10), min_size=15, max_size=15), st.floats(-3, 3))
    def test_linear(self, p1, p2, c):
        _, fmap = build_linek()
        p1, p2 = np.array(p1), np.array(p2)
        lhs = reward_from_phi(ParametricReward(p1 + c * p2, fmap))
        rhs = (reward_from_phi(ParametricReward(p1, fmap))
               + c * reward_from_phi(ParametricReward(p2, fmap)))
        assert np.allclose(lhs, rhs, atol=1e-9)


class TestFeatureMap:
    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            FeatureMap(np.full((2, 2, 2), 0.5))

    def test_abstraction_blocks(self):
        fmap = abstraction_features([0, 1, 1], 2, 2)
        assert fmap.features[2, 1].tolist() == [0, 0, 0, 1]


class TestPerturbedPolicy:
    def test_no_designated_is_uniform(self):
        mdp, _ = build_room()
        pi = perturbed_initial_policy(mdp, [], 0.0, target_policy(mdp))
        assert np.array_equal(pi, uniform_policy(81, 4))

    def test_room_gate_mass(self):
        mdp, _ = build_room()
        pi_t = target_policy(mdp)
        gates = room_gate_states()
        pi = perturbed_initial_policy(mdp, gates, 0.5, pi_t)
        for s in gates:
            assert pi[s][pi_t[s] == 0].sum() >= 0.5
        assert np.allclose(pi.sum(axis=1), 1, atol=1e-12)

    def test_linek_mass(self):
        mdp, _ = build_linek()
        pi_t = target_policy(mdp)
        fam = linek_policy_family()
        for i in range(5):
            pi = fam.policy(mdp, pi_t, i)
            for s in fam.designated[i]:
                assert pi[s][pi_t[s] == 0].sum() >= 0.7

    def test_needs_deterministic_target(self):
        mdp, _ = build_linek()
        with pytest.raises(ValueError):
            perturbed_initial_policy(mdp, [0], 0.5, uniform_policy(20, 3))

    def test_bad_probability(self):
        mdp, _ = build_linek()
        with pytest.raises(ValueError):
            perturbed_initial_policy(mdp, [0], 1.5, target_policy(mdp))
