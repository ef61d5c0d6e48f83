"""Room and LineK navigation MDPs with their abstraction feature maps.

Room map format
---------------
A map with ``R x C`` cells is a ``(2R+1) x (2C+1)`` block of characters. Cell
``(r, c)`` sits at line ``2r+1``, column ``2c+1``; the character between two
neighbouring cells encodes the segment separating them, and the outer ring
encodes the boundary::

    .  ordinary cell          ' ' open segment
    S  start cell             '#' wall segment (move is blocked, agent stays)
    G  goal cell              0-9 terminal wall (intended move ends the episode)

Characters at even/even positions (corners) are ignored. Every boundary
segment must be ``#`` or a digit, and the segment to the right of ``G`` must
be a terminal wall: ``(G, right)`` is the only rewarded pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .mdp import TabularMdp, deterministic_policy, uniform_policy

ROOM_ACTIONS = ("up", "left", "down", "right")
LINEK_ACTIONS = ("left", "right", "pick")
_MOVES = {0: (-1, 0), 1: (0, -1), 2: (1, 0), 3: (0, 1)}


class MapParseError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """Binary features ``features[s, a, i]``, shape (S, A, d)."""

    features: np.ndarray
    names: tuple = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if f.ndim != 3:
            raise ValueError("features must have shape (S, A, d)")
        if not np.all((f == 0) | (f == 1)):
            raise ValueError("features must be binary")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        """Features flattened to ((S*A), d)."""
        S, A, d = self.features.shape
        return self.features.reshape(S * A, d)

    def is_partition(self) -> bool:
        return bool(np.all(self.features.sum(axis=2) == 1))


@dataclass(frozen=True)
class ParametricReward:
    phi: np.ndarray
    feature_map: FeatureMap


def reward_from_phi(pr: ParametricReward) -> np.ndarray:
    phi = np.asarray(pr.phi, dtype=float)
    if phi.shape != (pr.feature_map.dim,):
        raise ValueError(f"phi has shape {phi.shape}, feature map has dimension {pr.feature_map.dim}")
    return pr.feature_map.features @ phi


def abstraction_features(region_of_state, n_regions: int, n_actions: int,
                         region_names=None, action_names=None) -> FeatureMap:
    """One-hot features over (region, action): f(s,a)_(i,a) = psi(s)_i."""
    region_of_state = np.asarray(region_of_state, dtype=int)
    S = len(region_of_state)
    f = np.zeros((S, n_actions, n_regions * n_actions))
    for s, g in enumerate(region_of_state):
        for a in range(n_actions):
            f[s, a, g * n_actions + a] = 1.0
    names = None
    if region_names is not None and action_names is not None:
        names = tuple(f"{rn}:{an}" for rn in region_names for an in action_names)
    return FeatureMap(f, names)


def phi_for_reward(reward: np.ndarray, feature_map: FeatureMap, tol: float = 1e-9):
    """Least-squares phi with R_phi == reward, or None when not expressible."""
    F = feature_map.matrix
    phi, *_ = np.linalg.lstsq(F, np.asarray(reward, dtype=float).ravel(), rcond=None)
    if np.max(np.abs(F @ phi - reward.ravel()), initial=0.0) > tol:
        return None
    return phi


# ---------------------------------------------------------------- Room


@dataclass(frozen=True)
class RoomMap:
    n_rows: int
    n_cols: int
    start: tuple
    goal: tuple
    # blocked[r, c, a] / terminal[r, c, a]: segment crossed by action a from (r, c)
    blocked: np.ndarray
    terminal: np.ndarray


def parse_room_map(text: str) -> RoomMap:
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise MapParseError("empty map")
    width = max(len(ln) for ln in lines)
    lines = [ln.ljust(width) for ln in lines]
    if len(lines) % 2 == 0 or width % 2 == 0:
        raise MapParseError(f"map must have odd height and width, got {len(lines)}x{width}")
    n_rows, n_cols = (len(lines) - 1) // 2, (width - 1) // 2
    blocked = np.zeros((n_rows, n_cols, 4), dtype=bool)
    terminal = np.zeros((n_rows, n_cols, 4), dtype=bool)
    start = goal = None
    for r in range(n_rows):
        for c in range(n_cols):
            ch = lines[2 * r + 1][2 * c + 1]
            if ch == "S":
                if start is not None:
                    raise MapParseError(f"second start at line {2 * r + 2}, column {2 * c + 2}")
                start = (r, c)
            elif ch == "G":
                if goal is not None:
                    raise MapParseError(f"second goal at line {2 * r + 2}, column {2 * c + 2}")
                goal = (r, c)
            elif ch != ".":
                raise MapParseError(f"unknown cell character {ch!r} at line {2 * r + 2}, column {2 * c + 2}")
            for a, (dr, dc) in _MOVES.items():
                y, x = 2 * r + 1 + dr, 2 * c + 1 + dc
                seg = lines[y][x]
                boundary = not (0 <= r + dr < n_rows and 0 <= c + dc < n_cols)
                if seg == "#":
                    blocked[r, c, a] = True
                elif seg.isdigit():
                    blocked[r, c, a] = True
                    terminal[r, c, a] = True
                elif seg == " ":
                    if boundary:
                        raise MapParseError(f"open boundary segment at line {y + 1}, column {x + 1}")
                else:
                    raise MapParseError(f"unknown segment character {seg!r} at line {y + 1}, column {x + 1}")
    if start is None or goal is None:
        raise MapParseError("map needs exactly one 'S' and one 'G'")
    if not terminal[goal][3]:
        raise MapParseError("the segment right of 'G' must be a terminal wall (digit)")
    return RoomMap(n_rows, n_cols, start, goal, blocked, terminal)


def default_room_map() -> str:
    return resources.files("reward_design").joinpath("maps/four_rooms_9x9.txt").read_text()


@dataclass
class RoomConfig:
    map_text: str = None
    p_rand: float = 0.05
    r_max: float = 10.0
    gamma: float = 0.95
    horizon: int = 30
    block_size: int = 3


def _noisy_action_probs(n_actions: int, p_rand: float) -> np.ndarray:
    # M[a, b]: probability that intended a executes b
    M = np.full((n_actions, n_actions), p_rand / (n_actions - 1))
    np.fill_diagonal(M, 1.0 - p_rand)
    return M


def room_regions(room: RoomMap, block_size: int = 3) -> tuple[np.ndarray, int]:
    """Region index per cell: square blocks tiling the grid plus a goal singleton."""
    blocks_per_row = -(-room.n_cols // block_size)
    n_blocks = blocks_per_row * -(-room.n_rows // block_size)
    region = np.empty(room.n_rows * room.n_cols, dtype=int)
    for r in range(room.n_rows):
        for c in range(room.n_cols):
            region[r * room.n_cols + c] = (r // block_size) * blocks_per_row + c // block_size
    region[room.goal[0] * room.n_cols + room.goal[1]] = n_blocks
    return region, n_blocks + 1


def build_room(cfg: RoomConfig = None) -> tuple[TabularMdp, FeatureMap]:
    cfg = cfg or RoomConfig()
    room = parse_room_map(cfg.map_text or default_room_map())
    R, C = room.n_rows, room.n_cols
    S, A = R * C, 4
    noise = _noisy_action_probs(A, cfg.p_rand)
    T = np.zeros((S, A, S))
    for r in range(R):
        for c in range(C):
            s = r * C + c
            for executed, (dr, dc) in _MOVES.items():
                nxt = s if room.blocked[r, c, executed] else (r + dr) * C + (c + dc)
                T[s, :, nxt] += noise[:, executed]
    term = room.terminal.reshape(S, A)
    reward = np.zeros((S, A))
    goal = room.goal[0] * C + room.goal[1]
    reward[goal, 3] = cfg.r_max
    p0 = np.zeros(S)
    p0[room.start[0] * C + room.start[1]] = 1.0
    names = tuple(f"({r},{c})" for r in range(R) for c in range(C))
    mdp = TabularMdp(T, p0, cfg.gamma, cfg.horizon, reward, term, names, ROOM_ACTIONS)
    region, n_regions = room_regions(room, cfg.block_size)
    region_names = [f"block{i}" for i in range(n_regions - 1)] + ["goal"]
    fmap = abstraction_features(region, n_regions, A, region_names, ROOM_ACTIONS)
    return mdp, fmap


def room_doorways(cfg: RoomConfig = None) -> list[tuple[int, int]]:
    """Pairs of cells joined by an opening in an interior wall line."""
    cfg = cfg or RoomConfig()
    room = parse_room_map(cfg.map_text or default_room_map())
    R, C = room.n_rows, room.n_cols
    doors = []
    for r in range(R):
        for c in range(C):
            # an opening counts as a door when the same wall line continues beside it
            if c + 1 < C and not room.blocked[r, c, 3]:
                if (r > 0 and room.blocked[r - 1, c, 3]) or (r + 1 < R and room.blocked[r + 1, c, 3]):
                    doors.append((r * C + c, r * C + c + 1))
            if r + 1 < R and not room.blocked[r, c, 2]:
                if (c > 0 and room.blocked[r, c - 1, 2]) or (c + 1 < C and room.blocked[r, c + 1, 2]):
                    doors.append((r * C + c, (r + 1) * C + c))
    return doors


def room_gate_states(cfg: RoomConfig = None) -> list[int]:
    return sorted({s for pair in room_doorways(cfg) for s in pair})


# ---------------------------------------------------------------- LineK

LINEK_REGIONS = ("key_loc_no_key", "goal_loc_has_key", "other_loc_no_key",
                 "other_loc_has_key", "key_loc_has_key")


@dataclass
class LineKConfig:
    n_nodes: int = 10
    key_node: int = 2
    start_node: int = 5
    p_rand: float = 0.1
    r_max: float = 10.0
    gamma: float = 0.95
    horizon: int = 30


def linek_state(node: int, has_key: bool, n_nodes: int) -> int:
    return node + n_nodes * int(has_key)


def linek_regions(cfg: LineKConfig) -> np.ndarray:
    n, key, goal = cfg.n_nodes, cfg.key_node, cfg.n_nodes - 1
    region = np.empty(2 * n, dtype=int)
    for node in range(n):
        region[linek_state(node, False, n)] = 0 if node == key else 2
        region[linek_state(node, True, n)] = 4 if node == key else (1 if node == goal else 3)
    return region


def build_linek(cfg: LineKConfig = None) -> tuple[TabularMdp, FeatureMap]:
    cfg = cfg or LineKConfig()
    n, key = cfg.n_nodes, cfg.key_node
    if n < 3:
        raise ValueError("LineK needs at least 3 nodes")
    if not 0 <= key < n - 1:
        raise ValueError("key node must lie strictly left of the goal node")
    if not 0 <= cfg.start_node < n:
        raise ValueError("start node outside the chain")
    S, A = 2 * n, 3
    noise = _noisy_action_probs(A, cfg.p_rand)
    T = np.zeros((S, A, S))
    for has_key in (False, True):
        for node in range(n):
            s = linek_state(node, has_key, n)
            outcomes = {
                0: linek_state(max(node - 1, 0), has_key, n),
                1: linek_state(min(node + 1, n - 1), has_key, n),
                2: linek_state(node, has_key or node == key, n),
            }
            for executed, nxt in outcomes.items():
                T[s, :, nxt] += noise[:, executed]
    goal = linek_state(n - 1, True, n)
    term = np.zeros((S, A), dtype=bool)
    term[goal, 1] = True
    reward = np.zeros((S, A))
    reward[goal, 1] = cfg.r_max
    p0 = np.zeros(S)
    p0[linek_state(cfg.start_node, False, n)] = 1.0
    names = tuple(f"node{node}{'+key' if k else ''}" for k in (0, 1) for node in range(n))
    mdp = TabularMdp(T, p0, cfg.gamma, cfg.horizon, reward, term, names, LINEK_ACTIONS)
    fmap = abstraction_features(linek_regions(cfg), len(LINEK_REGIONS), A,
                                LINEK_REGIONS, LINEK_ACTIONS)
    return mdp, fmap


def linek_designated_states(cfg: LineKConfig, index: int, n_groups: int = 5) -> list[int]:
    """States whose index is congruent to ``index`` mod ``n_groups``."""
    return [s for s in range(2 * cfg.n_nodes) if s % n_groups == index % n_groups]


# ---------------------------------------------------------------- initial policies


def perturbed_initial_policy(mdp: TabularMdp, designated_states, suboptimal_prob: float,
                             pi_t: np.ndarray) -> np.ndarray:
    """Uniform policy, except that designated states shift ``suboptimal_prob``
    onto the actions the target does not choose."""
    if not 0.0 <= suboptimal_prob <= 1.0:
        raise ValueError("suboptimal_prob must lie in [0, 1]")
    pi_t = np.asarray(pi_t, dtype=float)
    if not np.all((pi_t == 0) | (pi_t == 1)):
        raise ValueError("target policy must be deterministic")
    S, A = mdp.n_states, mdp.n_actions
    policy = uniform_policy(S, A)
    for s in designated_states:
        others = pi_t[s] == 0
        if not others.any():
            continue
        row = np.full(A, (1.0 - suboptimal_prob) / A)
        row[others] += suboptimal_prob / others.sum()
        policy[s] = row / row.sum()
    return policy


@dataclass
class InitialPolicyFamily:
    """The ``n`` distinct initial policies of the diverse-learners setting."""

    designated: list = field(default_factory=list)
    suboptimal_prob: float = 0.5

    def policy(self, mdp: TabularMdp, pi_t: np.ndarray, index: int) -> np.ndarray:
        states = self.designated[index % len(self.designated)]
        return perturbed_initial_policy(mdp, states, self.suboptimal_prob, pi_t)


def room_policy_family(cfg: RoomConfig = None) -> InitialPolicyFamily:
    """Five learners: all gate states, then each doorway's pair of cells."""
    doors = [list(pair) for pair in room_doorways(cfg)]
    gates = sorted({s for pair in doors for s in pair})
    groups = [gates] + doors
    while len(groups) < 5:
        groups.append(gates)
    return InitialPolicyFamily(groups[:5], 0.5)


def linek_policy_family(cfg: LineKConfig = None) -> InitialPolicyFamily:
    cfg = cfg or LineKConfig()
    return InitialPolicyFamily([linek_designated_states(cfg, i) for i in range(5)], 0.7)


def target_policy(mdp: TabularMdp, reward: np.ndarray = None) -> np.ndarray:
    """Deterministic optimal policy (lowest-index action among ties)."""
    from .mdp import argmax_sets, optimal_values

    reward = mdp.base_reward if reward is None else reward
    best = argmax_sets(optimal_values(mdp, reward).q)
    return deterministic_policy(best.argmax(axis=1), mdp.n_actions)
