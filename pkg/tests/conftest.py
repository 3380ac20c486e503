import numpy as np
import pytest

from mvtorus import _backend
from mvtorus.potentials import FourierPotential

BACKENDS = ["numpy"] + (["numba"] if _backend.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def kuramoto():
    return FourierPotential((-1.0,))


@pytest.fixture
def bichromatic():
    return FourierPotential((-1.0, -1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run regardless of capture
_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def report(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
