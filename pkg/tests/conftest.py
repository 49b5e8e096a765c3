import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ionpotential.equilibrium import solve_equilibrium
from ionpotential.potentials import Harmonic, Quartic

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def harmonic20():
    return solve_equilibrium(Harmonic(1.0), 20)


@pytest.fixture(scope="session")
def quartic20():
    return solve_equilibrium(Quartic(1.0, 1.0), 20)


def random_string(rng, n, lo=-3.0, hi=3.0, min_gap=0.2):
    """Sorted positions with every gap at least ``min_gap``."""
    gaps = min_gap + rng.exponential(0.5, size=n - 1)
    x = np.concatenate(([0.0], np.cumsum(gaps)))
    return x - x.mean() + rng.uniform(lo, hi) * 0.1


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(results):
        ok, detail = results[ac]
        terminalreporter.write_line(f"{ac}: {'PASS' if ok else 'FAIL'}  {detail}")
