import numpy as np
import pytest

from rydhop.ensemble import CloudConfig
from rydhop.interaction import InteractionCoefficients


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cloud():
    return CloudConfig()


@pytest.fixture
def hop():
    """Hopping only."""
    return InteractionCoefficients(c3_radial=1000.0)


@pytest.fixture
def hop_vdw():
    return InteractionCoefficients(c3_radial=1000.0, c6_down=20000.0, c6_up=5000.0)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in order."""
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
