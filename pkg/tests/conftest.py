import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmpgo._linalg import rot2
from mmpgo.graph import DistributedPoseGraph, EdgeSet, PoseGraph, Poses
from mmpgo.kernels import Huber, Trivial, Welsch

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

KERNELS = [Trivial(), Huber(0.5), Welsch(1.0)]
KERNEL_IDS = ["trivial", "huber", "welsch"]


def make_graph(d, n, edges, sizes=None):
    """Graph from ``(i, j, t, R, kappa, tau)`` tuples, split by ``sizes``."""
    if edges:
        i, j, t, R, k, tau = zip(*edges)
        i, j = np.array(i, np.int64), np.array(j, np.int64)
        t, R, k, tau = (np.array(c, dtype=float) for c in (t, R, k, tau))
    else:
        i = j = np.zeros(0, np.int64)
        t, R, k, tau = np.zeros((0, d)), np.zeros((0, d, d)), np.zeros(0), np.zeros(0)
    graph = PoseGraph(d, n, EdgeSet(i, j, t, R, k, tau))
    return DistributedPoseGraph(graph, [n] if sizes is None else sizes)


def random_ambient(rng, n, d, scale=1.0):
    return Poses(scale * rng.normal(size=(n, d)), scale * rng.normal(size=(n, d, d)))


def random_on_manifold(rng, n, d, spread=1.0):
    from mmpgo._linalg import random_rotations

    return Poses(spread * rng.normal(size=(n, d)), random_rotations(rng, n, d))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_node_instance():
    """Hand-built 4-pose SE(2) chain split 2+2 with one inter edge (1 -> 2)."""
    edges = [
        (0, 1, [1.0, 0.1], rot2(0.2), 1.0, 2.0),
        (1, 2, [0.9, -0.2], rot2(-0.1), 1.5, 1.0),
        (2, 3, [1.1, 0.0], rot2(0.3), 0.8, 1.2),
        (0, 1, [1.05, 0.0], rot2(0.25), 0.5, 0.5),
    ]
    return make_graph(2, 4, edges, sizes=[2, 2])


# ------------------------------------------------------------------ acceptance reporting

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request, capsys):
    """``record(n, ok, detail)`` prints one pass/fail line and fails the test if not ``ok``."""

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
