import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mqeuler.atlas import Atlas, Disk
from mqeuler.covering import TransversalCovering, vertices
from mqeuler.flat_bundle import from_holonomy

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SHEAR = np.array([[1.0, 1.0], [0.0, 1.0]])
DISKS = [Disk((0.0, 0.0), 0.4), Disk((0.5, 0.0), 0.4), Disk((0.0, 0.5), 0.4), Disk((0.5, 0.5), 0.4)]


@pytest.fixture(scope="session")
def default_atlas():
    return Atlas.from_disks(DISKS)


@pytest.fixture(scope="session")
def default_covering(default_atlas):
    return TransversalCovering(default_atlas, w=0.05)


@pytest.fixture(scope="session")
def shear_bundle(default_atlas):
    return from_holonomy(SHEAR, SHEAR @ SHEAR, default_atlas)


@pytest.fixture(scope="session")
def diag_bundle(default_atlas):
    return from_holonomy(np.diag([2.0, 0.5]), np.eye(2), default_atlas)


@pytest.fixture(scope="session")
def trivial_bundle(default_atlas):
    return from_holonomy(np.eye(2), np.eye(2), default_atlas)


@pytest.fixture(scope="session")
def shear_vertices(default_covering, shear_bundle):
    return vertices(default_covering, shear_bundle)


@pytest.fixture(scope="session")
def nontrivial_bplus(shear_vertices):
    """The two B_+ vertices of the shear scenario with nonvanishing index."""
    from mqeuler.local_index import nu_scale_free

    return [v for v in shear_vertices if v.in_B_plus and abs(nu_scale_free(v)) > 1e-6]


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance lines: ``acceptance(n, ok, detail, seconds)``."""

    def record(n, ok, detail, seconds):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  [{seconds:7.1f}s]  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
