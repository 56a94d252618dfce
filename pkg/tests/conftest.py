import numpy as np
import pytest

from correctsmooth.graph import OperatorKind, build_graph, make_operator


def random_graph(rng, n_min=2, n_max=50, density=None):
    """Erdos-Renyi-ish test graph; guaranteed at least one edge."""
    n = int(rng.integers(n_min, n_max + 1))
    p = density if density is not None else min(1.0, 4.0 / max(n - 1, 1))
    upper = np.triu_indices(n, k=1)
    mask = rng.random(upper[0].size) < p
    src, dst = upper[0][mask], upper[1][mask]
    if src.size == 0:
        src, dst = np.array([0]), np.array([n - 1 if n > 1 else 0])
        if n == 1:
            return build_graph(np.empty((0, 2), dtype=np.int64), 1)
    edges = np.stack([src, dst], axis=1).astype(np.int64)
    return build_graph(edges, n)


def random_operator(rng, kind=OperatorKind.SYM_NORM, **kw):
    return make_operator(random_graph(rng, **kw), kind)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def path3():
    return build_graph(np.array([[0, 1], [1, 2]]), 3)


@pytest.fixture
def k3():
    return build_graph(np.array([[0, 1], [0, 2], [1, 2]]), 3)


@pytest.fixture
def two_triangles():
    edges = np.array([[0, 1], [0, 2], [1, 2], [3, 4], [3, 5], [4, 5]])
    return build_graph(edges, 6)
