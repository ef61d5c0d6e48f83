"""Exact computations on finite, episodic MDPs.

Arrays follow one layout throughout the package:

* transition ``T[s, a, s']``
* rewards, Q-values, advantages and policies ``X[s, a]``
* state quantities ``v[s]``

A terminal ``(s, a)`` pair pays its reward and then ends the episode, which is
modelled as a jump to an implicit zero-value sink. Discounted quantities are
infinite-horizon; the episode cap ``horizon`` only applies to sampling and to
:func:`finite_horizon_return`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIRECT_SOLVE_LIMIT = 4096
TIE_TOL = 1e-9


@dataclass(frozen=True)
class TabularMdp:
    transition: np.ndarray
    initial_dist: np.ndarray
    gamma: float
    horizon: int
    base_reward: np.ndarray
    terminal_mask: np.ndarray = None
    state_names: tuple = None
    action_names: tuple = None

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {T.shape}")
        S, A, _ = T.shape
        p0 = np.asarray(self.initial_dist, dtype=float)
        R = np.asarray(self.base_reward, dtype=float)
        term = (np.zeros((S, A), dtype=bool) if self.terminal_mask is None
                else np.asarray(self.terminal_mask, dtype=bool))
        if p0.shape != (S,):
            raise ValueError(f"initial_dist must have shape ({S},), got {p0.shape}")
        if R.shape != (S, A) or term.shape != (S, A):
            raise ValueError("base_reward and terminal_mask must have shape (S, A)")
        if np.any(T < 0) or np.max(np.abs(T.sum(axis=2) - 1.0)) > 1e-12:
            bad = np.argwhere(np.abs(T.sum(axis=2) - 1.0) > 1e-12)
            raise ValueError(f"transition rows must be distributions; offending (s, a): {bad[:5].tolist()}")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ValueError("initial_dist must be a probability vector")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not np.all(np.isfinite(R)):
            raise ValueError("base_reward has non-finite entries")
        for name, arr in (("transition", T), ("initial_dist", p0),
                          ("base_reward", R), ("terminal_mask", term)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def continuation(self) -> np.ndarray:
        """Kernel with terminal rows zeroed: mass that stays in the episode."""
        return self.transition * (~self.terminal_mask)[:, :, None]


@dataclass(frozen=True)
class ValueBundle:
    q: np.ndarray
    v: np.ndarray
    adv: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "adv", self.q - self.v[:, None])


@dataclass(frozen=True)
class OccupancyMeasure:
    state: np.ndarray
    state_action: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    seed_tag: str = ""

    def __len__(self):
        return len(self.actions)


def check_policy(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {policy.shape} does not match MDP "
                         f"({mdp.n_states}, {mdp.n_actions})")
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-12:
        raise ValueError("policy rows must be probability vectors")
    return policy


def check_reward(mdp: TabularMdp, reward: np.ndarray) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape[:2] != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"reward shape {reward.shape} does not match MDP")
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward has non-finite entries")
    return reward


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def deterministic_policy(actions, n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    policy = np.zeros((len(actions), n_actions))
    policy[np.arange(len(actions)), actions] = 1.0
    return policy


def state_kernel(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """P_pi[s, s'] restricted to non-terminating mass."""
    return np.einsum("sa,sat->st", policy, mdp.continuation)


def _backup(mdp: TabularMdp, reward: np.ndarray, v: np.ndarray) -> np.ndarray:
    # reward and v may carry trailing batch dimensions
    cont = np.einsum("sat,t...->sa...", mdp.continuation, v)
    return reward + mdp.gamma * cont


def _gauss_seidel(P: np.ndarray, r: np.ndarray, gamma: float, tol: float) -> np.ndarray:
    v = np.zeros_like(r)
    for _ in range(100_000):
        delta = 0.0
        for s in range(len(r)):
            new = r[s] + gamma * P[s] @ v
            delta = max(delta, abs(new - v[s]))
            v[s] = new
        if delta <= tol * (1 - gamma):
            return v
    raise RuntimeError("Gauss-Seidel did not converge")


def policy_eval(mdp: TabularMdp, reward, policy, tol: float = 1e-10) -> ValueBundle:
    """Solve the Bellman expectation equation for ``policy`` under ``reward``."""
    reward = check_reward(mdp, reward)
    policy = check_policy(mdp, policy)
    if reward.ndim != 2:
        raise ValueError("policy_eval expects a single (S, A) reward table")
    P = state_kernel(mdp, policy)
    r_pi = np.einsum("sa,sa->s", policy, reward)
    if mdp.n_states * mdp.n_actions <= DIRECT_SOLVE_LIMIT:
        v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P, r_pi)
    else:
        v = _gauss_seidel(P, r_pi, mdp.gamma, tol)
    q = _backup(mdp, reward, v)
    v = np.einsum("sa,sa->s", policy, q)
    return ValueBundle(q=q, v=v)


def optimal_values(mdp: TabularMdp, reward, tol: float = 1e-10,
                   max_iter: int = 100_000) -> ValueBundle:
    """Optimal Q/V: value iteration, then policy-iteration polish to exactness."""
    reward = check_reward(mdp, reward)
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = _backup(mdp, reward, v)
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= tol:
            v = v_new
            break
        v = v_new
    else:
        raise RuntimeError("value iteration did not converge")
    actions = _backup(mdp, reward, v).argmax(axis=1)
    for _ in range(1000):
        pi = deterministic_policy(actions, mdp.n_actions)
        v = policy_eval(mdp, reward, pi).v
        q = _backup(mdp, reward, v)
        # switch only on strict improvement beyond the tie tolerance
        current = q[np.arange(mdp.n_states), actions]
        better = q.max(axis=1) > current + TIE_TOL * max(1.0, np.abs(q).max())
        if not better.any():
            break
        actions = np.where(better, q.argmax(axis=1), actions)
    q = _backup(mdp, reward, v)
    return ValueBundle(q=q, v=q.max(axis=1))


def argmax_sets(q: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Boolean (S, A) mask of actions within ``tol`` of the row maximum."""
    q = np.asarray(q, dtype=float)
    return q >= q.max(axis=1, keepdims=True) - tol


def greedy_policy(q, rng: np.random.Generator, tol: float = TIE_TOL) -> np.ndarray:
    """One-hot argmax policy; ties broken uniformly at random."""
    if isinstance(q, ValueBundle):
        q = q.q
    mask = argmax_sets(q, tol)
    # random key per entry, restricted to tied maxima
    keys = np.where(mask, rng.random(mask.shape), -1.0)
    return deterministic_policy(keys.argmax(axis=1), mask.shape[1])


def discounted_visitation(mdp: TabularMdp, policy) -> np.ndarray:
    """Unnormalized sum_t gamma^t P(s_t = s, episode alive)."""
    policy = check_policy(mdp, policy)
    P = state_kernel(mdp, policy)
    A = np.eye(mdp.n_states) - mdp.gamma * P.T
    try:
        return np.linalg.solve(A, mdp.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular occupancy system") from exc


def occupancy(mdp: TabularMdp, policy) -> OccupancyMeasure:
    """Normalized discounted state and state-action occupancy of ``policy``."""
    policy = np.asarray(policy, dtype=float)
    rho = discounted_visitation(mdp, policy)
    state = rho / rho.sum()
    return OccupancyMeasure(state=state, state_action=state[:, None] * policy)


def h_step_q(mdp: TabularMdp, reward, policy, h: int) -> ValueBundle:
    """Depth-h action values: expected discounted sum of the first h + 1 rewards.

    ``reward`` may carry a trailing batch axis ``(S, A, k)``; ``q`` and ``v``
    then carry it too (``adv`` is only meaningful for 2-d input).
    """
    if h < 0:
        raise ValueError("h must be nonnegative")
    reward = check_reward(mdp, reward)
    policy = check_policy(mdp, policy)
    q = reward
    for _ in range(h):
        v = np.einsum("sa,sa...->s...", policy, q)
        q = _backup(mdp, reward, v)
    v = np.einsum("sa,sa...->s...", policy, q)
    if q.ndim == 2:
        return ValueBundle(q=q, v=v)
    return q, v


def h_step_advantage(mdp: TabularMdp, reward, policy, h: int) -> np.ndarray:
    """Depth-h advantage; accepts a trailing batch axis on ``reward``."""
    policy = np.asarray(policy, dtype=float)
    reward = np.asarray(reward, dtype=float)
    if reward.ndim == 2:
        return h_step_q(mdp, reward, policy, h).adv
    q, v = h_step_q(mdp, reward, policy, h)
    return q - v[:, None, ...]


def expected_return(mdp: TabularMdp, reward, policy) -> float:
    """Infinite-horizon J(pi, R) = E_{s0 ~ P0}[V(s0)]."""
    return float(mdp.initial_dist @ policy_eval(mdp, reward, policy).v)


def finite_horizon_return(mdp: TabularMdp, reward, policy, horizon: int = None) -> float:
    """Exact expected return of an episode capped at ``horizon`` actions."""
    horizon = mdp.horizon if horizon is None else horizon
    reward = check_reward(mdp, reward)
    policy = check_policy(mdp, policy)
    r_pi = np.einsum("sa,sa->s", policy, reward)
    P = state_kernel(mdp, policy)
    v = np.zeros(mdp.n_states)
    for _ in range(horizon):
        v = r_pi + mdp.gamma * P @ v
    return float(mdp.initial_dist @ v)


class Sampler:
    """Cumulative tables for fast sampling from one MDP."""

    def __init__(self, mdp: TabularMdp):
        self.mdp = mdp
        self.cum_T = np.cumsum(mdp.transition, axis=2)
        self.cum_T[:, :, -1] = 1.0
        self.cum_p0 = np.cumsum(mdp.initial_dist)
        self.cum_p0[-1] = 1.0
        self.terminal = mdp.terminal_mask.tolist()

    def rollout(self, policy, rng: np.random.Generator, horizon: int = None,
                seed_tag: str = "") -> Trajectory:
        horizon = self.mdp.horizon if horizon is None else horizon
        cum_pi = np.cumsum(policy, axis=1)
        cum_pi[:, -1] = 1.0
        u = rng.random(2 * horizon + 1)
        s = int(np.searchsorted(self.cum_p0, u[0], side="right"))
        states, actions, nexts = [], [], []
        for t in range(horizon):
            a = int(np.searchsorted(cum_pi[s], u[2 * t + 1], side="right"))
            s_next = int(np.searchsorted(self.cum_T[s, a], u[2 * t + 2], side="right"))
            states.append(s)
            actions.append(a)
            nexts.append(s_next)
            if self.terminal[s][a]:
                break
            s = s_next
        return Trajectory(np.array(states, dtype=int), np.array(actions, dtype=int),
                          np.array(nexts, dtype=int), seed_tag)


def rollout(mdp: TabularMdp, policy, rng: np.random.Generator,
            horizon: int = None) -> Trajectory:
    """Sample one episode; stops after a terminal pair or ``horizon`` actions."""
    return Sampler(mdp).rollout(check_policy(mdp, policy), rng, horizon)


def trajectory_return(traj: Trajectory, reward, gamma: float) -> float:
    if len(traj) == 0:
        return 0.0
    reward = np.asarray(reward, dtype=float)
    r = reward[traj.states, traj.actions]
    return float(np.sum(r * gamma ** np.arange(len(r))))


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               gamma: float = 0.9, horizon: int = 30, support: int = None,
               terminal_prob: float = 0.0) -> TabularMdp:
    """Random dense (or ``support``-sparse) MDP, used by tests and the verify suite."""
    T = rng.random((n_states, n_actions, n_states))
    if support is not None and support < n_states:
        for s in range(n_states):
            for a in range(n_actions):
                drop = rng.permutation(n_states)[support:]
                T[s, a, drop] = 0.0
    T /= T.sum(axis=2, keepdims=True)
    p0 = rng.random(n_states)
    p0 /= p0.sum()
    R = rng.normal(size=(n_states, n_actions))
    term = rng.random((n_states, n_actions)) < terminal_prob
    return TabularMdp(T, p0, gamma, horizon, R, term)
