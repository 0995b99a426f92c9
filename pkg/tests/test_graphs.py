import numpy as np
import pytest

from lapnet.graphs import (GraphFormatError, Partition, TreeDecomposition,
                           ValidationError, WeightedGraph, hop_diameter,
                           laplacian, minor_density_bruteforce,
                           parse_graph_text, format_graph_text,
                           validate_partition, validate_tree_decomposition)
from conftest import cycle, path, rand_connected


def test_laplacian_unit_triangle(triangle):
    L = laplacian(triangle)
    assert np.allclose(np.diag(L), 2.0)
    assert np.allclose(L - np.diag(np.diag(L)), -(1 - np.eye(3)))


def test_laplacian_weighted_edge():
    g = WeightedGraph(2, [(0, 1, 3)])
    assert np.allclose(laplacian(g), [[3, -3], [-3, 3]])


def test_laplacian_weighted_path():
    g = path(3, [1, 2])
    L = laplacian(g)
    assert np.allclose(np.diag(L), [1, 3, 2])
    assert L[0, 1] == -1 and L[1, 2] == -2 and L[0, 2] == 0


def test_laplacian_ignores_self_loops():
    g = WeightedGraph(2, [(0, 1, 1), (0, 0, 5)])
    assert np.allclose(laplacian(g), [[1, -1], [-1, 1]])


def test_laplacian_sums_multi_edges():
    g = WeightedGraph(2, [(0, 1, 1), (0, 1, 2)])
    assert np.allclose(laplacian(g), [[3, -3], [-3, 3]])


@pytest.mark.parametrize("n,extra_seed", [(6, 0), (12, 1), (30, 2)])
def test_laplacian_psd_zero_rowsums(n, extra_seed):
    g = rand_connected(n, n // 2, extra_seed)
    L = laplacian(g)
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0.0)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1e-9
    # connected: kernel is exactly the all-ones direction
    assert np.sum(ev < 1e-9) == 1


def test_hop_diameter_values():
    assert hop_diameter(WeightedGraph(1, [])) == 0
    assert hop_diameter(path(4)) == 3
    assert hop_diameter(cycle(6)) == 3


def test_hop_diameter_disconnected_is_infinite():
    import math
    g = WeightedGraph(4, [(0, 1, 1), (2, 3, 1)])
    assert hop_diameter(g) == math.inf


def test_tree_decomposition_widths():
    g = path(3)
    dec = TreeDecomposition(bags=({0, 1}, {1, 2}), tree_edges=((0, 1),))
    assert validate_tree_decomposition(g, dec) == 1
    tri = WeightedGraph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])
    one_bag = TreeDecomposition(bags=({0, 1, 2},), tree_edges=())
    assert validate_tree_decomposition(tri, one_bag) == 2
    with pytest.raises(ValidationError):
        validate_tree_decomposition(tri, dec)   # edge {0,2} uncovered


def test_partition_multiplicity():
    g = cycle(6)
    assert validate_partition(g, Partition(([0, 1, 2, 3, 4, 5],))) == 1
    assert validate_partition(g, Partition(([0, 1, 2], [2, 3, 4]))) == 2
    with pytest.raises(ValidationError):
        validate_partition(g, Partition(([0, 3],)))   # two components


def test_minor_density_values(unit_edge, triangle):
    assert minor_density_bruteforce(unit_edge) == pytest.approx(0.5)
    assert minor_density_bruteforce(triangle) == pytest.approx(1.0)
    k4 = WeightedGraph(4, [(u, v, 1) for u in range(4) for v in range(u + 1, 4)])
    assert minor_density_bruteforce(k4) == pytest.approx(1.5)
    with pytest.raises(ValidationError):
        minor_density_bruteforce(cycle(12))


def test_graph_text_roundtrip():
    g = WeightedGraph(3, [(0, 1, 2), (1, 2, 3)], weight_cap=3)
    text = format_graph_text(g)
    assert text.splitlines()[0] == "3 2 3"
    h = parse_graph_text(text)
    assert h.n == g.n and h.edges == g.edges


def test_graph_text_rejects_bad_input():
    with pytest.raises(GraphFormatError):
        parse_graph_text("3 2\n0 1 1\n1 2 1\n")
    with pytest.raises(GraphFormatError):
        parse_graph_text("3 2 1\n0 1 1\n")                 # missing edge line
    with pytest.raises(GraphFormatError):
        parse_graph_text("2 1 1\n0 1 9\n")                 # weight above cap
