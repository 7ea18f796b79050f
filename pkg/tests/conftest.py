import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from noisemask.basis import ModeBasis, default_grid, make_grid
from noisemask.mask import BinarySquare

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def aperture():
    return BinarySquare((0.0, 0.0), 1.0)


@pytest.fixture(scope="session")
def basis25():
    """25 even modes, waist 2, on the default 512-sample grid."""
    return ModeBasis.even(25, 2.0, default_grid(2.0, 1.0))


@pytest.fixture(scope="session")
def small_basis():
    """Cheap 6-mode basis for property tests."""
    return ModeBasis.even(6, 2.0, make_grid(8.0, 128))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(k.rstrip("ab")), k)):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key:<3} {detail}")
