import numpy as np
import pytest

from fairthresh.data import CELLS
from fairthresh.density import FittedDensity
from fairthresh.objective import DensityBundle


def gaussian_bundle(params, counts=(100, 100, 100, 100)):
    """Bundle from ``(loc, scale)`` per cell in CELLS order."""
    dens = {c: FittedDensity("gaussian", p) for c, p in zip(CELLS, params)}
    return DensityBundle(dens, dict(zip(CELLS, counts)))


def random_gaussian_bundle(rng, n_range=(50, 500)):
    params = []
    for y, _ in CELLS:
        loc = rng.uniform(-2.0, 0.0) if y == 0 else rng.uniform(0.0, 2.0)
        params.append((loc, rng.uniform(0.6, 2.0)))
    counts = tuple(int(v) for v in rng.integers(*n_range, size=4))
    return gaussian_bundle(params, counts)


# Group ROC curves cross once inside the unit square (different variances);
# at baseline thresholds (0, 0) group 1 sits right of group 0 and both lie above the diagonal.
CROSSING_PARAMS = [(-1.0, 1.0), (-1.0, 2.0), (1.0, 1.0), (1.0, 0.5)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def symmetric_bundle():
    return gaussian_bundle([(-1.0, 1.0), (-1.0, 1.0), (1.0, 1.2), (1.0, 1.2)], (300, 300, 200, 200))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
