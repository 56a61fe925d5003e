import numpy as np
import pytest
from hypothesis import strategies as st

from eotstab import DiscreteMeasure, build_cost


@pytest.fixture
def symmetric():
    """mu = nu = (1/2, 1/2) on {0, 1}, quadratic cost, eps = 1."""
    mu = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]))
    return mu, mu, build_cost(mu, mu), 1.0


def random_measure(rng, n, dim=2, scale=1.0):
    return DiscreteMeasure.from_weights(scale * rng.random((n, dim)), rng.uniform(0.1, 1.0, n))


def random_problem(seed, max_atoms=6, dim=2):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, max_atoms + 1, size=2)
    mu, nu = random_measure(rng, m, dim), random_measure(rng, n, dim)
    eps = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
    return mu, nu, build_cost(mu, nu), eps, rng


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
