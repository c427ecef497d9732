import numpy as np
import pytest
from hypothesis import settings

from tailcast.egp import EgpParams

settings.register_profile("default", deadline=None, max_examples=60, print_blob=True)
settings.load_profile("default")

# reference EGP fits for skew surges (Brest, Saint-Nazaire, Port Tudy) with their thresholds
REFERENCE_FITS = {
    "brest": (EgpParams(0.13, -0.092, 15.12), 0.42),
    "saint_nazaire": (EgpParams(0.10, 0.004, 13.05), 0.36),
    "port_tudy": (EgpParams(0.09, -0.010, 38.68), 0.40),
}


@pytest.fixture
def ref_fits():
    return REFERENCE_FITS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: test_acceptance records (number, ok, detail)
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
