import numpy as np
import pytest

from gfmr.graphs import IncidenceGraph, grid_graph
from gfmr.model import Dataset, TensorShape


@pytest.fixture
def rng():
    return np.random.default_rng(20250811)


@pytest.fixture
def chain6():
    return grid_graph((6,))


@pytest.fixture
def grid34():
    return grid_graph((3, 4))


@pytest.fixture
def diamond():
    # 4-cycle plus one chord: cyclic, with two odd-degree vertices
    return IncidenceGraph(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])


def make_dataset(rng, n=8, M=6, p=2, noise=0.3, piecewise=True):
    """Small synthetic dataset over a length-M chain."""
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
    if piecewise:
        half = M // 2
        rows = [np.r_[np.zeros(half), np.ones(M - half)]]
        for j in range(1, p):
            rows.append(np.roll(rows[0], j) * (-1.0) ** j)
        Gamma = np.vstack(rows)
    else:
        Gamma = rng.normal(size=(p, M))
    Y = X @ Gamma + noise * rng.normal(size=(n, M))
    return Dataset(X=X, Y=Y, shape=TensorShape((M,))), Gamma
