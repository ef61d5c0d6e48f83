"""Slow, independent reference computations.

Each function recomputes a quantity by a different route than the main
modules (series truncation, enumeration, finite differences), so agreement
between the two is evidence rather than tautology. Sizes are meant to stay
small.
"""

from __future__ import annotations

import itertools

import numpy as np

from .mdp import TabularMdp


def truncated_values(mdp: TabularMdp, reward, policy, n_terms: int = 10_000):
    """V^pi by summing n_terms of the discounted reward series, step by step."""
    reward, policy = np.asarray(reward, float), np.asarray(policy, float)
    cont = mdp.continuation
    S = mdp.n_states
    dist = np.eye(S)  # row i: state distribution at time t starting from i
    v = np.zeros(S)
    disc = 1.0
    for _ in range(n_terms):
        v += disc * dist @ np.einsum("sa,sa->s", policy, reward)
        dist = dist @ np.einsum("sa,sat->st", policy, cont)
        disc *= mdp.gamma
        if disc < 1e-300:
            break
    return v


def truncated_occupancy(mdp: TabularMdp, policy, n_terms: int = 10_000):
    """Normalized discounted state occupancy from the truncated series."""
    policy = np.asarray(policy, float)
    P = np.einsum("sa,sat->st", policy, mdp.continuation)
    d = np.array(mdp.initial_dist, dtype=float)
    acc = np.zeros(mdp.n_states)
    disc = 1.0
    for _ in range(n_terms):
        acc += disc * d
        d = d @ P
        disc *= mdp.gamma
    return acc / acc.sum()


def deterministic_policies(n_states: int, n_actions: int):
    for choice in itertools.product(range(n_actions), repeat=n_states):
        pi = np.zeros((n_states, n_actions))
        pi[np.arange(n_states), choice] = 1.0
        yield pi


def policy_values_linear(mdp: TabularMdp, reward, policy):
    """V^pi from the state-space linear system (I - gamma P_pi) v = r_pi."""
    policy = np.asarray(policy, float)
    P = np.einsum("sa,sat->st", policy, mdp.continuation)
    r = np.einsum("sa,sa->s", policy, np.asarray(reward, float))
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P, r)


def brute_force_optimal_values(mdp: TabularMdp, reward):
    """State-wise max of V^pi over all deterministic policies."""
    best = np.full(mdp.n_states, -np.inf)
    for pi in deterministic_policies(mdp.n_states, mdp.n_actions):
        best = np.maximum(best, policy_values_linear(mdp, reward, pi))
    return best


def enumerate_h_step_q(mdp: TabularMdp, reward, policy, h: int):
    """Q^pi_{R,h}(s,a) by explicit expansion over every continuation path of
    h further steps (h + 1 reward terms)."""
    reward, policy = np.asarray(reward, float), np.asarray(policy, float)
    S, A = mdp.n_states, mdp.n_actions
    cont = mdp.continuation

    def value_from(s, a, depth):
        total = reward[s, a]
        if depth == 0:
            return total
        for s2 in range(S):
            p = cont[s, a, s2]
            if p == 0.0:
                continue
            for a2 in range(A):
                if policy[s2, a2] == 0.0:
                    continue
                total += mdp.gamma * p * policy[s2, a2] * value_from(s2, a2, depth - 1)
        return total

    return np.array([[value_from(s, a, h) for a in range(A)] for s in range(S)])


def vertex_enumeration_max(c, A_ub, b_ub, lower, upper, tol: float = 1e-9,
                           chunk: int = 20_000):
    """max c @ x over a bounded polytope by trying every n-subset of
    constraints (bounds included) as an active set, in vectorized batches.
    Returns (objective, x) or (None, None) when no vertex is feasible."""
    c = np.asarray(c, float)
    n = len(c)
    A_ub = np.asarray(A_ub, float).reshape(-1, n)
    eye = np.eye(n)
    M = np.vstack([A_ub, -eye, eye])
    b = np.concatenate([np.asarray(b_ub, float), -np.asarray(lower, float),
                        np.asarray(upper, float)])
    slack_tol = tol * np.maximum(1.0, np.abs(b))
    best, best_x = None, None
    combos = itertools.combinations(range(len(M)), n)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                            dtype=int)
        if block.size == 0:
            break
        idx = block.reshape(-1, n)
        sub = M[idx]
        ok = np.abs(np.linalg.det(sub)) > 1e-12
        if not ok.any():
            continue
        x = np.linalg.solve(sub[ok], b[idx[ok]][..., None])[..., 0]
        feasible = np.all(x @ M.T <= b + slack_tol, axis=1)
        if not feasible.any():
            continue
        vals = x[feasible] @ c
        k = int(np.argmax(vals))
        if best is None or vals[k] > best:
            best, best_x = float(vals[k]), x[feasible][k]
    return best, best_x


def exhaustive_box_max(objective, shape, r_max: float):
    """Max of a linear function of a reward table over all +-r_max sign
    patterns (the vertices of the box)."""
    size = int(np.prod(shape))
    best, best_R = -np.inf, None
    for signs in itertools.product((-1.0, 1.0), repeat=size):
        R = r_max * np.array(signs).reshape(shape)
        val = objective(R)
        if val > best:
            best, best_R = val, R
    return best, best_R


def central_difference(f, x, eps: float = 1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = eps
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g


def summed_informativeness(reward, ctx, h: int):
    """I_h by an explicit loop over (s, a) with the enumerated h-step Q."""
    q = enumerate_h_step_q(ctx.mdp, reward, ctx.learner, h)
    total = 0.0
    for s in range(ctx.mdp.n_states):
        pi = ctx.learner[s]
        v = pi @ q[s]
        mean_adv = pi @ ctx.target_adv[s]
        for a in range(ctx.mdp.n_actions):
            total += (ctx.mu_l[s] * pi[a] * ctx.mu_t[s] * pi[a]
                      * (ctx.target_adv[s, a] - mean_adv) * (q[s, a] - v))
    return total
