import numpy as np
import pytest
from hypothesis import strategies as st

from gaplcb.mdp import Policy, TabularMdp

ACCEPTANCE_LINES = []


def random_mdp(seed, S, A, H, ties=False):
    """Dirichlet kernels, uniform rewards; ``ties`` copies action 0 into action 1 at random cells."""
    g = np.random.default_rng(seed)
    kernel = g.dirichlet(np.ones(S), size=(H, S, A))
    rewards = g.random((H, S, A))
    if ties and A > 1:
        mask = g.random((H, S)) < 0.4
        kernel[:, :, 1][mask] = kernel[:, :, 0][mask]
        rewards[:, :, 1][mask] = rewards[:, :, 0][mask]
    p0 = g.dirichlet(np.ones(S))
    return TabularMdp(kernel, rewards, p0)


def random_policy(seed, H, S, A):
    g = np.random.default_rng(seed)
    return Policy.stochastic(g.dirichlet(np.ones(A), size=(H, S)))


@st.composite
def small_mdps(draw, max_cells=12, ties=False):
    """MDPs with S*A*H <= max_cells and at least two actions."""
    A = draw(st.integers(2, 3))
    H = draw(st.integers(1, max(1, max_cells // (2 * A))))
    S = draw(st.integers(1, max(1, max_cells // (A * H))))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_mdp(seed, S, A, H, ties=ties)


@pytest.fixture
def two_action_loop():
    """H=2, one state, action 0 pays 1 and action 1 pays 0."""
    kernel = np.ones((2, 1, 2, 1))
    rewards = np.zeros((2, 1, 2))
    rewards[:, 0, 0] = 1.0
    return TabularMdp(kernel, rewards, np.array([1.0]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
