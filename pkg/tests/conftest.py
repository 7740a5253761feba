import numpy as np
import pytest

from robustgcn import Graph, build_normalized_adjacency


def random_connected_graph(n, rng, p=0.3):
    """Random graph with a spanning chain so it is always connected."""
    edges = [(i, i + 1, 1.0) for i in range(n - 1)]
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < p:
                edges.append((i, j, 1.0))
    return Graph(n, edges)


@pytest.fixture
def path2():
    """2-node path: S = [[0,1],[1,0]]."""
    return Graph(2, [(0, 1, 1.0)])


@pytest.fixture
def path2_op(path2):
    return build_normalized_adjacency(path2)


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
