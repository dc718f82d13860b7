import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hele_shaw import RunConfig, random_map, run_simulation
from hele_shaw.gallery import HUNTINGFORD_T0, huntingford_map, offcenter_disk_map

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py, printed at the end
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("ab")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


# -- shared long runs (computed once per session) ---------------------------------

@pytest.fixture(scope="session")
def huntingford_events():
    """Huntingford from just after t_0 to t = 6 with continuation on."""
    t0 = HUNTINGFORD_T0 + 1e-3
    return run_simulation(RunConfig(huntingford_map(t0), t_span=(t0, 6.0), sample_dt=0.01,
                                    collision_continuation=True))


@pytest.fixture(scope="session")
def huntingford_long():
    """Event-free Huntingford run reaching a_1 > 10^3."""
    return run_simulation(RunConfig(huntingford_map(0.5), t_span=(0.5, 7.2), sample_dt=0.01))


@pytest.fixture(scope="session")
def huntingford_window():
    return run_simulation(RunConfig(huntingford_map(0.5), t_span=(0.5, 1.5), sample_dt=0.01))


@pytest.fixture(scope="session")
def offcenter_run():
    """Off-center disk from pole position 1.8 through the pole drop."""
    return run_simulation(RunConfig(offcenter_disk_map(1.8), t_span=(0.0, 1.0), sample_dt=0.01))


@pytest.fixture(scope="session")
def random_rational_runs():
    rng = np.random.default_rng(11)
    runs = []
    while len(runs) < 3:
        rd = random_map(rng, max_m=4, max_n=2)
        if rd.n == 0:
            continue
        runs.append(run_simulation(RunConfig(rd, t_span=(0.0, 0.3), sample_dt=1e-3)))
    return runs
