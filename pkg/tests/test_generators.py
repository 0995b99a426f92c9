import pytest

from lapnet.generators import generate_graph
from lapnet.graphs import hop_diameter, validate_tree_decomposition


def test_path_graph_shape():
    g, dec = generate_graph("path", 5)
    assert g.n == 5 and g.m == 4
    assert hop_diameter(g) == 4
    assert dec is None


def test_cycle_graph_shape():
    g, _ = generate_graph("cycle", 8)
    assert g.n == 8 and g.m == 8
    assert hop_diameter(g) == 4


def test_ktree_width():
    g, dec = generate_graph("ktree", 20, k=3, seed=5)
    assert g.n == 20
    assert validate_tree_decomposition(g, dec) == 3
    # every k-tree on n > k nodes has exactly k*n - k*(k+1)/2 edges
    assert g.m == 3 * 20 - 3 * 4 // 2


def test_partial_ktree_subset_of_ktree():
    full, _ = generate_graph("ktree", 30, k=2, seed=9)
    part, dec = generate_graph("partial-ktree", 30, k=2, seed=9, drop_fraction=0.3)
    kept = {(u, v) for u, v, _ in part.edges}
    assert kept <= {(u, v) for u, v, _ in full.edges}
    assert part.m < full.m
    assert validate_tree_decomposition(part, dec) <= 2


def test_grid_graph_shape():
    g, _ = generate_graph("grid", 36, rows=6, cols=6)
    assert g.n == 36 and g.m == 60
    assert hop_diameter(g) == 10


def test_star_and_complete():
    g, _ = generate_graph("star", 7)
    assert g.m == 6 and hop_diameter(g) == 2
    g, _ = generate_graph("complete", 5)
    assert g.m == 10 and hop_diameter(g) == 1


def test_weight_cap_respected():
    g, _ = generate_graph("ktree", 25, k=2, weight_cap=7, seed=3)
    ws = [w for _, _, w in g.edges]
    assert all(1 <= w <= 7 and w == int(w) for w in ws)
    assert max(ws) > 1   # cap actually exercised


def test_determinism():
    a, _ = generate_graph("partial-ktree", 40, k=3, weight_cap=5, seed=11)
    b, _ = generate_graph("partial-ktree", 40, k=3, weight_cap=5, seed=11)
    c, _ = generate_graph("partial-ktree", 40, k=3, weight_cap=5, seed=12)
    assert a.edges == b.edges
    assert a.edges != c.edges


def test_unknown_family_raises():
    with pytest.raises(ValueError):
        generate_graph("hypercube", 8)
