import numpy as np
import pytest

from velaid.measurement import M_FIELD, TrajectorySpec, gen_trajectory, synth_series


@pytest.fixture(scope="session")
def traj():
    return gen_trajectory(TrajectorySpec())


@pytest.fixture(scope="session")
def clean(traj):
    return synth_series(traj, M_FIELD)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
