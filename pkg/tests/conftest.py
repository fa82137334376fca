import time

import numpy as np
import pytest
from hypothesis import settings

from mvns.attractor import fit_trajectory_constant
from mvns.dissipativity import CalibrationPlan, calibrate_dissipativity
from mvns.spectral import shear_mode, space

settings.register_profile("mvns", deadline=None, max_examples=40)
settings.load_profile("mvns")

LAMINAR = dict(N=16, nu=1.0, amplitude=0.1)
LADDER = (0.2, 0.1, 0.05, 0.025)


@pytest.fixture(scope="session")
def laminar():
    """Calibrated laminar shear configuration, shared by the whole run."""
    sp = space(LAMINAR["N"])
    f = shear_mode(sp, LAMINAR["amplitude"])
    t = time.perf_counter()
    consts = calibrate_dissipativity(sp.N, LAMINAR["nu"], f, CalibrationPlan(ladder=LADDER))
    elapsed = time.perf_counter() - t
    consts = fit_trajectory_constant(consts, f, 10.0, LADDER)
    return {"space": sp, "f": f, "constants": consts, "calibration_seconds": elapsed, "nu": LAMINAR["nu"]}


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
