import sys
import numpy as np
import pytest
from hypothesis import settings

from cloakbench.geometry import MeshResolution, PartialGeneratorSpec, make_curve, slab_domain, tube_domain

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def segment():
    return make_curve("segment", {"p0": (0.0, 0.0, 0.0), "q0": (1.0, 0.0, 0.0)})


@pytest.fixture(scope="session")
def arc():
    return make_curve("arc", {"radius": 1.0, "angle": 1.0})


@pytest.fixture(scope="session")
def tube_coarse(segment):
    return tube_domain(segment, 0.2, MeshResolution(n_circ=8, h_max=0.2))


@pytest.fixture(scope="session")
def slab_coarse():
    return slab_domain(PartialGeneratorSpec(), 0.2, MeshResolution(n_circ=8, h_max=0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
