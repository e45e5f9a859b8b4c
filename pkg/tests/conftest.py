import math

import pytest

from mzcoupler.lock import (
    DESK_SCENARIO, ReferenceReadout, StretcherModel, default_gains, run_closed_loop,
)
from mzcoupler.optics import CouplerModel

_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, title, passed, detail)``."""

    def _report(number, title, passed, detail=""):
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] AC{number:02d} {title}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] AC{number:02d} {title}: {detail}"
        )


@pytest.fixture(scope="session")
def tuned_gains():
    return default_gains(ReferenceReadout(), StretcherModel(), 30.0, 1e-4)


@pytest.fixture(scope="session")
def desk_run(tuned_gains):
    """Ten simulated minutes of the default scenario at the 50:50 setpoint."""
    coupler = CouplerModel(bias_phase=math.pi / 2)
    return run_closed_loop(DESK_SCENARIO, ReferenceReadout(), StretcherModel(), tuned_gains,
                           coupler, 600.0, 1e-4)
