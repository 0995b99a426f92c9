"""Deterministic graph family generators used by tests, experiments, and the CLI.

Every generator takes an explicit seed and returns integral weights in 1..W.
k-trees ship their canonical tree decomposition so the decomposition-guided
shortcut provider has something honest to work with; partial k-trees reuse the
parent k-tree's decomposition (still valid after edge deletions).
"""

from __future__ import annotations

import numpy as np

from .graphs import TreeDecomposition, WeightedGraph

FAMILIES = ("path", "cycle", "grid", "ktree", "partial-ktree", "complete", "star")


def _weights(rng, count, weight_cap):
    if weight_cap <= 1:
        return [1] * count
    return [int(w) for w in rng.integers(1, weight_cap + 1, size=count)]


def path_graph(n, weight_cap=1, seed=0):
    rng = np.random.default_rng(seed)
    ws = _weights(rng, n - 1, weight_cap)
    return WeightedGraph(n, [(i, i + 1, ws[i]) for i in range(n - 1)], weight_cap)


def cycle_graph(n, weight_cap=1, seed=0):
    rng = np.random.default_rng(seed)
    ws = _weights(rng, n, weight_cap)
    return WeightedGraph(n, [(i, (i + 1) % n, ws[i]) for i in range(n)], weight_cap)


def grid_graph(rows, cols, weight_cap=1, seed=0):
    rng = np.random.default_rng(seed)
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    ws = _weights(rng, len(edges), weight_cap)
    return WeightedGraph(rows * cols, [(u, v, w) for (u, v), w in zip(edges, ws)],
                         weight_cap)


def complete_graph(n, weight_cap=1, seed=0):
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    ws = _weights(rng, len(pairs), weight_cap)
    return WeightedGraph(n, [(u, v, w) for (u, v), w in zip(pairs, ws)], weight_cap)


def star_graph(n, weight_cap=1, seed=0):
    rng = np.random.default_rng(seed)
    ws = _weights(rng, n - 1, weight_cap)
    return WeightedGraph(n, [(0, i, ws[i - 1]) for i in range(1, n)], weight_cap)


def ktree_graph(n, k, weight_cap=1, seed=0):
    """Random k-tree on n >= k+1 nodes, plus its width-k tree decomposition."""
    if n < k + 1:
        raise ValueError("k-tree needs n >= k+1")
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(k + 1) for v in range(u + 1, k + 1)]
    # One bag for the seed clique; each later node adds {node} + its k-clique.
    cliques = [tuple(range(k + 1))]          # attachable k-cliques... index list
    kcliques = [tuple(sorted(c)) for c in _subcliques(range(k + 1), k)]
    bags = [frozenset(range(k + 1))]
    bag_host = {kc: 0 for kc in kcliques}     # k-clique -> bag that contains it
    tree_edges = []
    for node in range(k + 1, n):
        kc = kcliques[rng.integers(0, len(kcliques))]
        edges.extend((node, c) for c in kc)
        bag = frozenset(kc) | {node}
        bags.append(bag)
        tree_edges.append((bag_host[kc], len(bags) - 1))
        for sub in _subcliques(list(kc) + [node], k):
            key = tuple(sorted(sub))
            if key not in bag_host or node in sub:
                bag_host[key] = len(bags) - 1
        kcliques.extend(tuple(sorted(sub)) for sub in _subcliques(list(kc) + [node], k)
                        if node in sub)
    ws = _weights(rng, len(edges), weight_cap)
    g = WeightedGraph(n, [(u, v, w) for (u, v), w in zip(edges, ws)], weight_cap)
    dec = TreeDecomposition(bags, tree_edges)
    return g, dec


def _subcliques(nodes, k):
    nodes = list(nodes)
    if k == len(nodes):
        return [tuple(nodes)]
    out = []
    for drop in range(len(nodes)):
        out.append(tuple(nodes[:drop] + nodes[drop + 1:]))
    return out


def partial_ktree_graph(n, k, drop_fraction=0.25, weight_cap=1, seed=0):
    """Connected random subgraph of a k-tree (treewidth still <= k)."""
    g, dec = ktree_graph(n, k, weight_cap=weight_cap, seed=seed)
    rng = np.random.default_rng(seed + 1)
    order = rng.permutation(g.m)
    keep = [True] * g.m
    target = int(drop_fraction * g.m)
    dropped = 0
    for eid in order:
        if dropped >= target:
            break
        keep[eid] = False
        trial = WeightedGraph(g.n, [e for i, e in enumerate(g.edges) if keep[i]],
                              g.weight_cap)
        if trial.is_connected():
            dropped += 1
        else:
            keep[eid] = True
    g2 = WeightedGraph(g.n, [e for i, e in enumerate(g.edges) if keep[i]], g.weight_cap)
    return g2, dec


def generate_graph(family, n, *, k=2, weight_cap=1, seed=0, rows=None, cols=None,
                   drop_fraction=0.25):
    """Uniform front door used by the CLI and the experiment runner.

    Returns (graph, decomposition_or_None).
    """
    if family == "path":
        return path_graph(n, weight_cap, seed), None
    if family == "cycle":
        return cycle_graph(n, weight_cap, seed), None
    if family == "grid":
        if rows is None:
            rows = int(np.sqrt(n))
            cols = (n + rows - 1) // rows
        return grid_graph(rows, cols, weight_cap, seed), None
    if family == "ktree":
        return ktree_graph(n, k, weight_cap, seed)
    if family == "partial-ktree":
        return partial_ktree_graph(n, k, drop_fraction, weight_cap, seed)
    if family == "complete":
        return complete_graph(n, weight_cap, seed), None
    if family == "star":
        return star_graph(n, weight_cap, seed), None
    raise ValueError(f"unknown family {family!r} (choose from {FAMILIES})")
