"""Ultra-sparsifiers: a low-stretch spanning tree, stretch-proportional
off-tree sampling, and exact degree-1/2 elimination.

The pipeline turns a graph G into a preconditioner H (tree edges scaled by k
plus a few sampled off-tree edges, spectrally between L(G) and ~k L(G)) and
then shrinks H to its core graph: repeatedly removing degree-1 nodes and
splicing degree-2 nodes is an exact partial Cholesky step, so the recorded
row operations Z1 and the eliminated-diagonal inverse Z2 satisfy

    L(H)^+ == Z1^T [Z2 0; 0 L(core)^+] Z1

on the subspace orthogonal to the all-ones vector (the raw product is a
symmetric {1,2}-inverse of L(H); projecting both sides makes the identity
exact, which is what the tests check).

The tree is an exact-stretch heuristic: a resistance shortest-path tree from
the 1-median improved by greedy swap passes.  Stretch values are computed
exactly and are therefore valid upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .graphs import ValidationError, WeightedGraph
from .minors import (MinorDistribution, compose_minors, minor_matvec,
                     validate_minor)


# =============================================================================
# Low-stretch spanning tree
# =============================================================================

@dataclass(frozen=True)
class StretchTree:
    tree_edges: tuple          # edge ids into the graph
    parent: tuple              # (node, parent node, edge id), root excluded
    root: int
    stretches: dict            # off-tree edge id -> exact stretch
    total_stretch: float


def _resistance_matrix(graph):
    n = graph.n
    rows, cols, vals = [], [], []
    for (u, v, w) in graph.edges:
        if u == v:
            continue
        rows.extend((u, v))
        cols.extend((v, u))
        vals.extend((1.0 / w, 1.0 / w))
    return csr_matrix((vals, (rows, cols)), shape=(n, n))


def _spt_edges(graph, root):
    """Shortest-path tree under resistance lengths; returns edge ids."""
    mat = _resistance_matrix(graph)
    _dist, pred = dijkstra(mat, indices=root, return_predecessors=True)
    best = {}
    for eid, (u, v, w) in enumerate(graph.edges):
        if u == v:
            continue
        for a, b in ((u, v), (v, u)):
            if pred[b] == a:
                if b not in best or w > graph.edges[best[b]][2]:
                    best[b] = eid
    if len(best) != graph.n - 1:
        raise ValidationError("graph is disconnected")
    return sorted(best.values())


def _tree_structure(graph, tree_edges, root):
    adj = {}
    for eid in tree_edges:
        u, v, _w = graph.edges[eid]
        adj.setdefault(u, []).append((v, eid))
        adj.setdefault(v, []).append((u, eid))
    parent = {root: (None, None)}
    depth_r = {root: 0.0}
    order = [root]
    stack = [root]
    while stack:
        x = stack.pop()
        for (y, eid) in adj.get(x, ()):
            if y not in parent:
                parent[y] = (x, eid)
                depth_r[y] = depth_r[x] + 1.0 / graph.edges[eid][2]
                order.append(y)
                stack.append(y)
    if len(parent) != graph.n:
        raise ValidationError("tree edges do not span the graph")
    return parent, depth_r


def _path_resistance(parent, depth_r, u, v):
    ru, rv = depth_r[u], depth_r[v]
    seen = set()
    a = u
    while a is not None:
        seen.add(a)
        a = parent[a][0]
    b = v
    while b not in seen:
        b = parent[b][0]
    return ru + rv - 2.0 * depth_r[b], b


def _stretch_map(graph, tree_edges, root):
    parent, depth_r = _tree_structure(graph, tree_edges, root)
    tset = set(tree_edges)
    stretches = {}
    for eid, (u, v, w) in enumerate(graph.edges):
        if eid in tset or u == v:
            continue
        path_r, _lca = _path_resistance(parent, depth_r, u, v)
        stretches[eid] = path_r * w  # stretch = path resistance / r_e
    return parent, stretches


def _cycle_tree_edges(graph, parent, u, v):
    """Tree edges on the fundamental cycle closed by {u, v}."""
    up_u, a = [], u
    seen = {}
    while a is not None:
        seen[a] = len(up_u)
        pa, eid = parent[a]
        if pa is None:
            break
        up_u.append(eid)
        a = pa
    path_v, b = [], v
    while b not in seen:
        pb, eid = parent[b]
        path_v.append(eid)
        b = pb
    return up_u[:seen[b]] + path_v


SWAP_CANDIDATES = 32


def low_stretch_tree(graph, seed=0, swap_passes=2):
    """Exact-stretch tree: resistance SPT from the 1-median plus swap passes.

    Swaps trade a high-stretch off-tree edge into the tree for the heaviest
    resistance edge on its fundamental cycle, kept when the exact total
    improves.
    """
    if graph.n == 1:
        return StretchTree((), (), 0, {}, 0.0)
    mat = _resistance_matrix(graph)
    dist = dijkstra(mat)
    if np.isinf(dist).any():
        raise ValidationError("graph is disconnected")
    root = int(np.argmin(dist.sum(axis=1)))
    tree = _spt_edges(graph, root)
    parent, stretches = _stretch_map(graph, tree, root)
    total = sum(stretches.values())
    for _ in range(swap_passes):
        improved = False
        worst = sorted(stretches, key=lambda e: -stretches[e])[:SWAP_CANDIDATES]
        for eid in worst:
            u, v, _w = graph.edges[eid]
            cycle = _cycle_tree_edges(graph, parent, u, v)
            out = max(cycle, key=lambda f: 1.0 / graph.edges[f][2])
            cand = sorted(set(tree) - {out} | {eid})
            cand_parent, cand_stretch = _stretch_map(graph, cand, root)
            cand_total = sum(cand_stretch.values())
            if cand_total < total - 1e-12:
                tree, parent, stretches, total = (cand, cand_parent,
                                                  cand_stretch, cand_total)
                improved = True
        if not improved:
            break
    pairs = tuple(sorted((x, p, e) for x, (p, e) in parent.items()
                         if p is not None))
    return StretchTree(tuple(tree), pairs, root, stretches, total)


# =============================================================================
# Stretch-proportional sampling
# =============================================================================

DEFAULT_SAMPLING_CONST = 2.0


def sample_by_stretch(graph, tree, k, seed=0, sampling_const=DEFAULT_SAMPLING_CONST):
    """Tree edges scaled by k plus off-tree edges kept with probability
    proportional to stretch, reweighted by 1/p.  Returns (H, off-tree ids of
    H, probability map on original edge ids, original id per H edge)."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    rng = np.random.default_rng(seed)
    logn = math.log(max(graph.n, 2))
    edges = []
    origin = []
    offtree = []
    probs = {}
    for eid in tree.tree_edges:
        u, v, w = graph.edges[eid]
        edges.append((u, v, w * float(k)))
        origin.append(eid)
    for eid, stretch in sorted(tree.stretches.items()):
        p = min(1.0, sampling_const * stretch * logn / k)
        probs[eid] = p
        if p > 0 and rng.random() < p:
            u, v, w = graph.edges[eid]
            offtree.append(len(edges))
            edges.append((u, v, w / p))
            origin.append(eid)
    h = WeightedGraph(graph.n, edges, weight_cap=None, labels=graph.labels)
    return h, tuple(offtree), probs, tuple(origin)


# =============================================================================
# Exact degree-1/2 elimination (partial Cholesky on pendant and series nodes)
# =============================================================================

class PartialCholesky:
    """Recorded single-node eliminations; applies Z1, Z1^T and the
    eliminated-block inverse without materializing anything.

    Each step is (node, pivot, ((neighbor, weight), ...)) captured at
    elimination time, so Z1 is the inverse of the unit lower-triangular
    factor in elimination order.
    """

    def __init__(self, n, steps, kept):
        self.n = n
        self.steps = tuple(steps)
        self.kept = tuple(sorted(kept))
        self.eliminated = tuple(s[0] for s in self.steps)
        if set(self.kept) | set(self.eliminated) != set(range(n)):
            raise ValidationError("elimination does not cover the node set")

    def apply_z1(self, b):
        y = np.array(b, dtype=float)
        for (u, d, nbrs) in self.steps:
            val = y[u]
            for (v, w) in nbrs:
                y[v] += (w / d) * val
        return y

    def apply_z1t(self, b):
        y = np.array(b, dtype=float)
        for (u, d, nbrs) in reversed(self.steps):
            acc = 0.0
            for (v, w) in nbrs:
                acc += (w / d) * y[v]
            y[u] += acc
        return y

    def apply_block(self, y, tail_fn):
        """diag(Z2, tail) on a full-length vector: eliminated coordinates get
        the pivot inverse, kept coordinates go through tail_fn (a map on
        vectors indexed like self.kept)."""
        out = np.zeros_like(y)
        for (u, d, _nbrs) in self.steps:
            out[u] = y[u] / d
        kept_idx = np.array(self.kept, dtype=int)
        if len(kept_idx):
            out[kept_idx] = tail_fn(y[kept_idx])
        return out

    def apply_pinv(self, b, tail_fn):
        """Z1^T [Z2 0; 0 tail] Z1 b; with tail = L(core)^+ this is a
        symmetric {1,2}-inverse of the original Laplacian."""
        return self.apply_z1t(self.apply_block(self.apply_z1(b), tail_fn))

    def materialize(self, tail_matrix):
        cols = []
        tail = np.asarray(tail_matrix, dtype=float)
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            cols.append(self.apply_pinv(e, lambda y: tail @ y))
        return np.column_stack(cols)


@dataclass
class EliminationResult:
    core_graph: WeightedGraph      # nodes relabeled 0..|C|-1, labels = host ids
    core: tuple                    # kept node ids in the input graph
    ops: PartialCholesky
    dist: MinorDistribution        # core graph as a 1-minor of the input
    steps: int = 0
    extras: dict = field(default_factory=dict)


def _live_edges(graph):
    """Mutable edge records: [u, v, w, path, alive]; path is the oriented
    list of host edge ids the record stands for."""
    recs = []
    for eid, (u, v, w) in enumerate(graph.edges):
        recs.append([u, v, float(w), [eid], u != v])
        if u == v:
            recs[-1][4] = False
    return recs


def _path_nodes(graph, path, start):
    """Interior host nodes of an oriented edge-id path starting at start."""
    nodes = []
    cur = start
    for eid in path[:-1]:
        a, b, _w = graph.edges[eid]
        cur = b if a == cur else a
        nodes.append(cur)
    return nodes


def eliminate_degree12(graph, protected):
    """Remove degree-1 and splice degree-2 nodes outside `protected`.

    Returns the core graph, the exact partial-Cholesky operators, and a
    1-minor distribution of the core into the input graph.  Host edges are
    tracked per live edge so every core edge picks a concrete image and the
    absorbed chains become super-node trees.
    """
    n = graph.n
    protected = set(protected)
    if not protected:
        protected = {0}
    recs = _live_edges(graph)
    incident = [set() for _ in range(n)]
    for i, rec in enumerate(recs):
        if rec[4]:
            incident[rec[0]].add(i)
            incident[rec[1]].add(i)
    absorbed = {}       # eliminated host node -> kept-side attachment node
    tree_pool = {}      # attachment node -> host edge ids collected
    steps = []
    alive = [True] * n

    def absorb_interior(rec, owner):
        a = rec[0] if owner == rec[0] else rec[1]
        for x in _path_nodes(graph, rec[3] if a == rec[0]
                             else rec[3][::-1], a):
            absorbed[x] = owner
        tree_pool.setdefault(owner, []).extend(rec[3])

    changed = True
    while changed:
        changed = False
        for u in range(n):
            if not alive[u] or u in protected:
                continue
            live = [i for i in incident[u] if recs[i][4]]
            if len(live) == 1:
                i = live[0]
                rec = recs[i]
                v = rec[1] if rec[0] == u else rec[0]
                steps.append((u, rec[2], ((v, rec[2]),)))
                rec[4] = False
                incident[v].discard(i)
                absorbed[u] = v
                absorb_interior(rec, v)
                tree_pool.setdefault(v, [])
                alive[u] = False
                changed = True
            elif len(live) == 2:
                i, j = live
                ri, rj = recs[i], recs[j]
                a = ri[1] if ri[0] == u else ri[0]
                b = rj[1] if rj[0] == u else rj[0]
                d = ri[2] + rj[2]
                if a == b:
                    steps.append((u, d, ((a, d),)))
                else:
                    steps.append((u, d, ((a, ri[2]), (b, rj[2]))))
                ri[4] = rj[4] = False
                incident[a].discard(i)
                incident[b].discard(j)
                alive[u] = False
                path_i = ri[3] if ri[0] == a else ri[3][::-1]
                path_j = rj[3] if rj[0] == u else rj[3][::-1]
                if a == b:
                    # parallel pair collapses to a self-loop: nothing survives
                    absorbed[u] = a
                    absorb_interior(ri, a)
                    absorb_interior(rj, a)
                    tree_pool.setdefault(a, []).extend(ri[3] + rj[3])
                else:
                    w = ri[2] * rj[2] / d
                    k = len(recs)
                    recs.append([a, b, w, path_i + path_j, True])
                    incident[a].add(k)
                    incident[b].add(k)
                changed = True

    kept = sorted(x for x in range(n) if alive[x])
    ops = PartialCholesky(n, steps, kept)
    remap = {x: i for i, x in enumerate(kept)}

    # Interiors of surviving records go to the first endpoint's super-node so
    # the last path edge can serve as the image; after this pass every
    # eliminated node has an absorption chain ending at a kept node.
    core_edges = []
    images = []
    for rec in recs:
        if not rec[4]:
            continue
        a, b, w, path = rec[0], rec[1], rec[2], rec[3]
        for x in _path_nodes(graph, path if a == rec[0] else path[::-1], a):
            absorbed[x] = a
        if len(path) > 1:
            tree_pool.setdefault(a, []).extend(path[:-1])
        core_edges.append((remap[a], remap[b], w))
        images.append(("edge", path[-1]))

    def final_root(x):
        while x in absorbed:
            x = absorbed[x]
        return x

    tree_edges_by_owner = {x: [] for x in kept}
    for owner, eids in tree_pool.items():
        tree_edges_by_owner[final_root(owner)].extend(eids)
    members = {x: {x} for x in kept}
    for x in absorbed:
        members[final_root(x)].add(x)
    core_graph = WeightedGraph(len(kept), core_edges,
                               labels=tuple(graph.label_of(x) for x in kept))
    supers, trees = [], []
    for x in kept:
        supers.append(frozenset(members[x]))
        trees.append(_spanning_subset(graph, members[x],
                                      tree_edges_by_owner[x]))
    dist = MinorDistribution(core_graph, graph, tuple(supers),
                             tuple(kept), tuple(trees), tuple(images))
    validate_minor(dist)
    return EliminationResult(core_graph, tuple(kept), ops, dist,
                             steps=len(steps))


def _spanning_subset(graph, nodes, edge_ids):
    """BFS spanning tree of `nodes` restricted to the collected edges."""
    if len(nodes) == 1:
        return ()
    adj = {}
    for eid in set(edge_ids):
        a, b, _w = graph.edges[eid]
        if a in nodes and b in nodes and a != b:
            adj.setdefault(a, []).append((b, eid))
            adj.setdefault(b, []).append((a, eid))
    root = min(nodes)
    seen = {root}
    out = []
    queue = [root]
    while queue:
        x = queue.pop(0)
        for (y, eid) in sorted(adj.get(x, ())):
            if y not in seen:
                seen.add(y)
                out.append(eid)
                queue.append(y)
    if seen != set(nodes):
        raise ValidationError("collected edges do not span the super-node")
    return tuple(sorted(out))


# =============================================================================
# The pipeline
# =============================================================================

@dataclass
class UltraSparsifyResult:
    h: WeightedGraph
    tree: StretchTree
    offtree: tuple                 # off-tree edge ids of h
    core_graph: WeightedGraph
    core: tuple                    # kept node ids of h (== of g)
    ops: PartialCholesky
    dist_core: MinorDistribution   # core into h
    dist_host: MinorDistribution | None
    rounds: int
    extras: dict = field(default_factory=dict)


def ultrasparsify(graph, k, *, seed=0, sampling_const=DEFAULT_SAMPLING_CONST,
                  dist=None, service=None, swap_passes=2):
    """Tree + sampled off-tree edges, then degree-1/2 elimination.

    With a minor distribution and an aggregation service attached, the
    communication cost of the construction and of later operator
    applications is charged through the service and reported in rounds.
    """
    tree = low_stretch_tree(graph, seed=seed, swap_passes=swap_passes)
    h, offtree, probs, origin = sample_by_stretch(
        graph, tree, k, seed=seed + 1, sampling_const=sampling_const)
    protected = set()
    for hid in offtree:
        u, v, _w = h.edges[hid]
        protected.update((u, v))
    elim = eliminate_degree12(h, protected)
    rounds = 0
    extras = {"probs": probs, "origin": origin,
              "total_stretch": tree.total_stretch,
              "sweeps": max(1, math.ceil(math.log2(max(graph.n, 2))))}
    if service is not None and dist is not None:
        _y, per_sweep = minor_matvec(dist, np.zeros(dist.minor.n),
                                     service=service)
        rounds = per_sweep * (extras["sweeps"] + 2)
    dist_host = None
    if dist is not None:
        if dist.minor.n != graph.n:
            raise ValidationError("distribution does not match the graph")
        dist_h = MinorDistribution(h, dist.host, dist.super_nodes,
                                   dist.leaders, dist.trees,
                                   tuple(dist.edge_images[o] for o in origin))
        dist_host = compose_minors(elim.dist, dist_h)
    return UltraSparsifyResult(h, tree, offtree, elim.core_graph, elim.core,
                               elim.ops, elim.dist, dist_host, rounds, extras)
