import numpy as np
import pytest

from lapnet.graphs import WeightedGraph


@pytest.fixture
def unit_edge():
    return WeightedGraph(2, [(0, 1, 1)])


@pytest.fixture
def triangle():
    return WeightedGraph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])


def cycle(n, w=1):
    return WeightedGraph(n, [(i, (i + 1) % n, w) for i in range(n)])


def path(n, weights=None):
    weights = weights or [1] * (n - 1)
    return WeightedGraph(n, [(i, i + 1, weights[i]) for i in range(n - 1)])


def rand_connected(n, extra, seed, cap=4):
    """Random spanning tree plus `extra` uniformly chosen chords."""
    rng = np.random.default_rng(seed)
    edges = []
    for v in range(1, n):
        edges.append((int(rng.integers(0, v)), v, int(rng.integers(1, cap + 1))))
    seen = {(min(u, v), max(u, v)) for (u, v, _w) in edges}
    tries = 0
    while extra > 0 and tries < 50 * n:
        tries += 1
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u == v or (min(u, v), max(u, v)) in seen:
            continue
        seen.add((min(u, v), max(u, v)))
        edges.append((u, v, int(rng.integers(1, cap + 1))))
        extra -= 1
    return WeightedGraph(n, edges, weight_cap=cap)
