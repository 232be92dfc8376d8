import numpy as np
import pytest

from spectrack import backend
from spectrack.deform import rotation_matrix
from spectrack.splat import Scene

BACKENDS = sorted(backend.available().items())


@pytest.fixture(params=[name for name, _ in BACKENDS])
def kernels(request):
    return backend.available()[request.param]


def random_scene(rng, n, channels=1, spread=0.6, scale=(0.08, 0.3)):
    means = rng.uniform(-spread, spread, (n, 2))
    covs = np.empty((n, 2, 2))
    for i in range(n):
        s = rng.uniform(scale[0], scale[1], 2)
        r = rotation_matrix(rng.uniform(0.0, np.pi))
        c = r @ np.diag(s * s) @ r.T
        covs[i] = 0.5 * (c + c.T)
    return Scene(means, covs, rng.uniform(0.2, 1.0, (n, channels)), rng.uniform(0.2, 0.95, n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
