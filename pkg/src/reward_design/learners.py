"""Tabular learners: REINFORCE, the exact depth-h policy-gradient learner and
the greedy one-step learner."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, Trajectory, deterministic_policy, h_step_advantage, occupancy


def softmax(theta: np.ndarray) -> np.ndarray:
    z = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class SoftmaxPolicy:
    theta: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.theta)

    @classmethod
    def from_probs(cls, probs) -> "SoftmaxPolicy":
        probs = np.asarray(probs, dtype=float)
        if np.any(probs <= 0):
            raise ValueError("softmax logits need strictly positive probabilities")
        return cls(np.log(probs))


@dataclass
class LearnerConfig:
    kind: str = "reinforce"
    alpha: float = 0.05
    h: int = 1
    baseline: bool = False
    stochastic_ties: bool = False

    def __post_init__(self):
        if self.kind not in ("reinforce", "simple_pg", "greedy"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.kind != "greedy" and self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.kind == "simple_pg" and self.h < 0:
            raise ValueError("h must be nonnegative")


class ReplayBuffer:
    """FIFO store of the most recent ``capacity`` trajectories."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def push(self, traj: Trajectory) -> None:
        self._items.append(traj)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    G = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        G[t] = acc
    return G


def reinforce_gradient(theta: np.ndarray, trajectories, reward: np.ndarray,
                       gamma: float, baseline: bool = False) -> np.ndarray:
    """Monte-Carlo estimate of sum_t gamma^t G_t grad log pi(a_t|s_t),
    averaged over trajectories."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("REINFORCE needs at least one trajectory")
    probs = softmax(theta)
    states, actions, weights = [], [], []
    returns = [returns_to_go(reward[tr.states, tr.actions], gamma) for tr in trajectories]
    b = np.mean([G[0] for G in returns if len(G)]) if baseline else 0.0
    for tr, G in zip(trajectories, returns):
        if len(tr) == 0:
            continue
        states.append(tr.states)
        actions.append(tr.actions)
        weights.append(gamma ** np.arange(len(G)) * (G - b))
    grad = np.zeros_like(theta)
    if not states:
        return grad
    s = np.concatenate(states)
    a = np.concatenate(actions)
    w = np.concatenate(weights)
    # grad log pi(a|s) = e_a - pi(.|s)
    np.add.at(grad, (s, a), w)
    np.add.at(grad, s, -w[:, None] * probs[s])
    return grad / len(trajectories)


def reinforce_update(policy: SoftmaxPolicy, buffer, reward: np.ndarray, gamma: float,
                     alpha: float, baseline: bool = False) -> SoftmaxPolicy:
    if len(buffer) == 0:
        raise ValueError("REINFORCE update requested on an empty buffer")
    grad = reinforce_gradient(policy.theta, buffer, reward, gamma, baseline)
    return SoftmaxPolicy(policy.theta + alpha * grad)


def simple_pg_step(theta: np.ndarray, mdp: TabularMdp, reward: np.ndarray, h: int,
                   occ_state: np.ndarray = None) -> np.ndarray:
    """E_{mu_{s,a}}[grad log pi(a|s) Q_h(s,a)] for tabular softmax.

    Per entry this is mu_s * pi(a|s) * A_h(s,a). ``reward`` may carry a trailing
    batch axis, giving one step direction per reward column.
    """
    probs = softmax(theta)
    if occ_state is None:
        occ_state = occupancy(mdp, probs).state
    adv = h_step_advantage(mdp, reward, probs, h)
    w = occ_state[:, None] * probs
    return w.reshape(w.shape + (1,) * (adv.ndim - 2)) * adv


def simple_pg_update(policy: SoftmaxPolicy, mdp: TabularMdp, reward: np.ndarray,
                     alpha: float, h: int = 1) -> SoftmaxPolicy:
    """One exact-expectation vanilla policy-gradient step with depth-h Q-values."""
    reward = np.asarray(reward, dtype=float)
    return SoftmaxPolicy(policy.theta + alpha * simple_pg_step(policy.theta, mdp, reward, h))


def greedy_update(reward: np.ndarray, rng: np.random.Generator = None,
                  stochastic_ties: bool = False, tol: float = 1e-9) -> np.ndarray:
    """pi(s) <- argmax_a R(s, a).

    With ``stochastic_ties`` the returned policy is uniform over all tied
    maximizers instead of sampling one of them.
    """
    reward = np.asarray(reward, dtype=float)
    mask = reward >= reward.max(axis=1, keepdims=True) - tol
    if stochastic_ties:
        return mask / mask.sum(axis=1, keepdims=True)
    if rng is None:
        raise ValueError("random tie-breaking needs a generator")
    keys = np.where(mask, rng.random(mask.shape), -1.0)
    return deterministic_policy(keys.argmax(axis=1), reward.shape[1])
