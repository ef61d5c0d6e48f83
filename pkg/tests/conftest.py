import numpy as np
import pytest

from reward_design.mdp import TabularMdp


def chain_mdp(n_states, gamma=0.9, horizon=30, reward=None, terminal_last=False):
    """Single-action deterministic chain s -> s+1, last state self-loops."""
    T = np.zeros((n_states, 1, n_states))
    for s in range(n_states):
        T[s, 0, min(s + 1, n_states - 1)] = 1.0
    p0 = np.zeros(n_states)
    p0[0] = 1.0
    R = np.zeros((n_states, 1)) if reward is None else np.asarray(reward, float)
    term = np.zeros((n_states, 1), bool)
    term[-1, 0] = terminal_last
    return TabularMdp(T, p0, gamma, horizon, R, term)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def _report(number, title, passed, detail):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
