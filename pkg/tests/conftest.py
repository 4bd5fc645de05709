import itertools

import numpy as np
import pytest

from neuralssvm.graph_model import FactorGraphSample


def all_labelings(n_nodes, n_labels):
    """Every labeling in lexicographic order (node 0 most significant)."""
    return [np.array(y) for y in itertools.product(range(n_labels), repeat=n_nodes)]


def make_sample(rng, n_nodes, d_u=3, d_i=2, n_labels=3, edge_prob=0.5, labeled=True):
    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)
             if rng.random() < edge_prob]
    return FactorGraphSample(
        rng.normal(size=(n_nodes, d_u)),
        np.array(pairs, dtype=int).reshape(-1, 2),
        rng.normal(size=(len(pairs), d_i)),
        rng.integers(n_labels, size=n_nodes) if labeled else None)


def path_sample(rng, n_nodes, d_u=3, d_i=2, n_labels=3):
    edges = np.array([(i, i + 1) for i in range(n_nodes - 1)]).reshape(-1, 2)
    return FactorGraphSample(rng.normal(size=(n_nodes, d_u)), edges,
                             rng.normal(size=(len(edges), d_i)),
                             rng.integers(n_labels, size=n_nodes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
