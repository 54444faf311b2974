import numpy as np
import pytest

from ftlnet.micro import MicroParams, MicroState, Topology
from ftlnet.network import RoadNetwork, enumerate_paths


def line(*lengths):
    """Roads 1..n in series."""
    roads = [(i + 1, L) for i, L in enumerate(lengths)]
    juncs = [("o", [], [1])]
    juncs += [(f"j{i}", [i], [i + 1]) for i in range(1, len(lengths))]
    juncs.append(("d", [len(lengths)], []))
    return RoadNetwork.from_lists(roads, juncs)


def merge_net(L=4000.0):
    return RoadNetwork.from_lists(
        [(1, L), (2, L), (3, L)],
        [("o1", [], [1]), ("o2", [], [2]), ("J", [1, 2], [3]), ("d", [3], [])])


def diverge_net(L=4000.0):
    return RoadNetwork.from_lists(
        [(1, L), (2, L), (3, L)],
        [("o", [], [1]), ("J", [1], [2, 3]), ("d2", [2], []), ("d3", [3], [])])


def cross_net(L=4000.0):
    return RoadNetwork.from_lists(
        [(1, L), (2, L), (3, L), (4, L)],
        [("o1", [], [1]), ("o2", [], [2]), ("J", [1, 2], [3, 4]),
         ("d3", [3], []), ("d4", [4], [])])


def make_state(net, path_ids, s, ell=1.0, dt=0.1, v_max=1.0, active=None):
    paths = enumerate_paths(net)
    s = np.asarray(s, dtype=float)
    active = np.ones(len(s), dtype=bool) if active is None else np.asarray(active)
    return MicroState(MicroParams(ell=ell, dt=dt, v_max=v_max), Topology(net, paths),
                      np.asarray(path_ids, dtype=np.int64), s, active)


@pytest.fixture
def merge():
    return merge_net()


@pytest.fixture
def diverge():
    return diverge_net()


@pytest.fixture
def cross():
    return cross_net()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line_ in RESULTS:
            terminalreporter.write_line(line_)
