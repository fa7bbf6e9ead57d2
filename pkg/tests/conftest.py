import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hocbf.dynamics import SystemParams

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])
settings.load_profile("repo")


@pytest.fixture
def nominal():
    return SystemParams(r=0.1, L=0.1, u=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_params(rng):
    return SystemParams(r=rng.uniform(0.03, 0.2), L=rng.uniform(0.05, 0.3), u=rng.choice([-1, 1]) * rng.uniform(0.3, 2.0))


def random_state(rng, box=3.0):
    return np.array([rng.uniform(-box, box), rng.uniform(-box, box), rng.uniform(-math.pi, math.pi)])


# --------------------------------------------------------------------------
# Shared trained models and the acceptance summary
# --------------------------------------------------------------------------

_TRAINED: dict = {}
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def trained():
    """``trained(name) -> (scenario, TrainingResult, seconds)``, trained once per session."""
    import time

    from hocbf.residual_learner import learn_cbf
    from hocbf.scenario import load_bundled

    def get(name):
        if name not in _TRAINED:
            sc = load_bundled(name)
            t0 = time.perf_counter()
            res = learn_cbf(sc)
            _TRAINED[name] = (sc, res, time.perf_counter() - t0)
        return _TRAINED[name]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
