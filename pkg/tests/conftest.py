import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cautious_ac.envs import make_discretized_pendulum, make_random_mdp

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}
NUM_CRITERIA = 9


def battery_sizes(seed):
    """State/action counts of the seeded random-MDP battery (|S| <= 10, |A| <= 5)."""
    rng = np.random.default_rng(seed)
    return int(rng.integers(2, 11)), int(rng.integers(2, 6))


def battery_mdp(seed, discount=0.99):
    S, A = battery_sizes(seed)
    return make_random_mdp(S, A, seed=seed, discount=discount)


@pytest.fixture(scope="session")
def battery():
    return [battery_mdp(seed) for seed in range(20)]


@pytest.fixture(scope="session")
def pendulum():
    return make_discretized_pendulum()


@pytest.fixture
def small_mdp():
    return make_random_mdp(5, 3, seed=11, discount=0.9)


def random_policy(rng, S, A, concentration=1.0):
    return rng.dirichlet(np.full(A, concentration), size=S)


@pytest.fixture
def report():
    """Record an acceptance outcome; printed in the terminal summary."""

    def _report(number, name, passed, detail=""):
        _ACCEPTANCE[number] = (name, passed, detail)

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, NUM_CRITERIA + 1):
        if number not in _ACCEPTANCE:
            terminalreporter.write_line(f"[{number}] FAIL did not complete (error or deselected)")
            continue
        name, passed, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{number}] {status} {name}: {detail}")
