from pathlib import Path

import numpy as np
import pytest

from modrecon import Graph, load_edge_list, load_labels

DATA = Path(__file__).resolve().parent.parent / "data"


def dataset(name, labels=True):
    g = load_edge_list(DATA / name / "edges.txt")
    lab = DATA / name / "labels.txt"
    if labels and lab.exists():
        g = load_labels(lab, g)
    return g


def two_triangles():
    return Graph.from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], labels=[0, 0, 0, 1, 1, 1])


def random_graph(rng, n, p=0.2):
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack([iu[0][keep], iu[1][keep]])
    if len(edges) == 0:
        edges = np.array([[0, 1]])
    return Graph.from_edges(n, edges)


@pytest.fixture(scope="session")
def karate():
    return dataset("karate")


@pytest.fixture(scope="session")
def football():
    return dataset("football")


@pytest.fixture(scope="session")
def lesmis():
    return dataset("lesmis")


@pytest.fixture
def triangles():
    return two_triangles()


# acceptance reporting: each criterion test tags itself and leaves a detail line,
# and the terminal summary prints one PASS/FAIL line per criterion

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    def tag(number, detail=""):
        request.node.user_properties.append(("criterion", (number, detail)))
    return tag


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "criterion":
            number, detail = value
            _CRITERIA[number] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
