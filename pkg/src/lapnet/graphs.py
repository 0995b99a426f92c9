"""Weighted multigraphs and the combinatorial checks the rest of the package leans on.

Graphs are immutable-by-convention: node ids are dense integers 0..n-1, edges
are (u, v, w) triples addressed by their list index, and parallel edges and
self-loops are legal (self-loops carry no Laplacian mass but stay in the edge
list so edge ids remain stable under contraction).

An optional ``labels`` tuple carries stable node names across derived graphs
(subgraphs, Schur complements, contractions); algebra always runs on dense
indices and label bookkeeping is the caller's job.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """Raised when an on-disk graph or partition file is malformed."""


class ValidationError(ValueError):
    """Raised when a structural invariant (decomposition, partition) fails."""


# =============================================================================
# Core graph type
# =============================================================================

class WeightedGraph:
    """Undirected weighted multigraph on nodes 0..n-1.

    Edge weights are positive reals internally; file parsing enforces the
    integral 1..W convention at the boundary.
    """

    __slots__ = ("n", "edges", "weight_cap", "labels", "_adj", "_degrees")

    def __init__(self, n, edges, weight_cap=None, labels=None):
        self.n = int(n)
        self.edges = []
        for (u, v, w) in edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValidationError(f"edge ({u},{v}) out of range for n={self.n}")
            if w <= 0:
                raise ValidationError(f"edge ({u},{v}) has non-positive weight {w}")
            self.edges.append((u, v, float(w)))
        self.weight_cap = weight_cap
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != self.n:
                raise ValidationError("labels length does not match n")
        self.labels = labels
        self._adj = None
        self._degrees = None

    @property
    def m(self):
        return len(self.edges)

    def label_of(self, u):
        return self.labels[u] if self.labels is not None else u

    def index_of_label(self, lab):
        if self.labels is None:
            return int(lab)
        return self.labels.index(lab)

    def adjacency(self):
        """adj[u] -> list of (v, w, edge_id); self-loops excluded."""
        if self._adj is None:
            adj = [[] for _ in range(self.n)]
            for eid, (u, v, w) in enumerate(self.edges):
                if u == v:
                    continue
                adj[u].append((v, w, eid))
                adj[v].append((u, w, eid))
            self._adj = adj
        return self._adj

    def neighbors(self, u):
        return self.adjacency()[u]

    def degree(self, u):
        """Number of incident non-loop edges (multi-edges counted)."""
        return len(self.adjacency()[u])

    def weighted_degree(self, u):
        if self._degrees is None:
            deg = np.zeros(self.n)
            for (u2, v2, w) in self.edges:
                if u2 == v2:
                    continue
                deg[u2] += w
                deg[v2] += w
            self._degrees = deg
        return self._degrees[u]

    def total_weight(self):
        return sum(w for (u, v, w) in self.edges if u != v)

    def is_connected(self):
        if self.n == 0:
            return True
        seen = bfs_layers(self, 0)
        return all(d < math.inf for d in seen)

    def components(self):
        comp = [-1] * self.n
        c = 0
        for s in range(self.n):
            if comp[s] >= 0:
                continue
            comp[s] = c
            q = deque([s])
            while q:
                u = q.popleft()
                for (v, _w, _e) in self.neighbors(u):
                    if comp[v] < 0:
                        comp[v] = c
                        q.append(v)
            c += 1
        return comp

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, m={self.m})"


def laplacian(graph):
    """Dense Laplacian; parallel edges accumulate, self-loops contribute zero."""
    L = np.zeros((graph.n, graph.n))
    for (u, v, w) in graph.edges:
        if u == v:
            continue
        L[u, u] += w
        L[v, v] += w
        L[u, v] -= w
        L[v, u] -= w
    return L


def bfs_layers(graph, source):
    """Unweighted hop distance from source; math.inf for unreachable nodes."""
    dist = [math.inf] * graph.n
    dist[source] = 0
    q = deque([source])
    while q:
        u = q.popleft()
        for (v, _w, _e) in graph.neighbors(u):
            if dist[v] == math.inf:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def hop_diameter(graph):
    """Max over nodes of BFS eccentricity; math.inf when disconnected."""
    if graph.n == 0:
        return 0
    first = bfs_layers(graph, 0)
    if any(d == math.inf for d in first):
        return math.inf
    best = 0
    for s in range(graph.n):
        ecc = max(bfs_layers(graph, s))
        best = max(best, ecc)
    return best


def bfs_tree(graph, root, within=None):
    """BFS spanning tree as (parent array restricted to reached set, edge ids).

    ``within`` restricts the search to a node subset.  Returns (parent, tree_edges)
    where parent maps node -> (parent_node, edge_id) and root maps to None.
    """
    allowed = None if within is None else set(within)
    parent = {root: None}
    tree_edges = []
    q = deque([root])
    while q:
        u = q.popleft()
        for (v, _w, eid) in graph.neighbors(u):
            if allowed is not None and v not in allowed:
                continue
            if v not in parent:
                parent[v] = (u, eid)
                tree_edges.append(eid)
                q.append(v)
    return parent, tree_edges


def subgraph(graph, nodes):
    """Induced subgraph; returns (graph with labels carrying old ids, old->new map)."""
    nodes = sorted(set(nodes))
    remap = {u: i for i, u in enumerate(nodes)}
    edges = [(remap[u], remap[v], w) for (u, v, w) in graph.edges
             if u in remap and v in remap]
    labels = tuple(graph.label_of(u) for u in nodes)
    return WeightedGraph(len(nodes), edges, graph.weight_cap, labels), remap


# =============================================================================
# Partitions and tree decompositions
# =============================================================================

@dataclass(frozen=True)
class Partition:
    """A family of node parts, possibly overlapping (multiplicity > 1)."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(frozenset(p) for p in self.parts))

    def multiplicity(self, n):
        count = [0] * n
        for p in self.parts:
            for u in p:
                count[u] += 1
        return max(count) if count else 0

    def __len__(self):
        return len(self.parts)


def validate_partition(graph, partition, require_connected=True, require_cover=False):
    """Check parts are in range, non-empty, and induce connected subgraphs.

    Returns the multiplicity (max number of parts any node belongs to).
    """
    for i, p in enumerate(partition.parts):
        if not p:
            raise ValidationError(f"part {i} is empty")
        if not all(0 <= u < graph.n for u in p):
            raise ValidationError(f"part {i} has out-of-range node")
        if require_connected:
            root = min(p)
            parent, _ = bfs_tree(graph, root, within=p)
            if len(parent) != len(p):
                raise ValidationError(f"part {i} does not induce a connected subgraph")
    if require_cover:
        covered = set().union(*partition.parts) if partition.parts else set()
        if covered != set(range(graph.n)):
            raise ValidationError("parts do not cover the node set")
    return partition.multiplicity(graph.n)


@dataclass(frozen=True)
class TreeDecomposition:
    """Bags indexed 0..b-1 plus tree edges over bag indices."""

    bags: tuple
    tree_edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(frozenset(b) for b in self.bags))
        object.__setattr__(self, "tree_edges", tuple((int(a), int(b)) for a, b in self.tree_edges))

    @property
    def width(self):
        return max((len(b) for b in self.bags), default=0) - 1


def validate_tree_decomposition(graph, dec):
    """Full decomposition check: cover, edge cover, running intersection, tree shape.

    Returns the width.
    """
    b = len(dec.bags)
    if b == 0:
        if graph.n == 0:
            return -1
        raise ValidationError("empty decomposition for non-empty graph")
    # tree shape: b-1 edges, connected
    if len(dec.tree_edges) != b - 1:
        raise ValidationError("decomposition tree is not a tree (edge count)")
    adj = [[] for _ in range(b)]
    for (a, c) in dec.tree_edges:
        if not (0 <= a < b and 0 <= c < b):
            raise ValidationError("decomposition tree edge out of range")
        adj[a].append(c)
        adj[c].append(a)
    seen = {0}
    q = deque([0])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                q.append(y)
    if len(seen) != b:
        raise ValidationError("decomposition tree is not connected")
    # node cover
    covered = set().union(*dec.bags)
    if covered != set(range(graph.n)):
        raise ValidationError("bags do not cover all nodes")
    # edge cover
    for (u, v, _w) in graph.edges:
        if u == v:
            continue
        if not any(u in bag and v in bag for bag in dec.bags):
            raise ValidationError(f"edge ({u},{v}) not inside any bag")
    # running intersection: bags containing any node form a subtree
    for u in range(graph.n):
        holding = [i for i in range(b) if u in dec.bags[i]]
        hold = set(holding)
        seen = {holding[0]}
        q = deque([holding[0]])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y in hold and y not in seen:
                    seen.add(y)
                    q.append(y)
        if len(seen) != len(hold):
            raise ValidationError(f"bags containing node {u} are not connected in the tree")
    return dec.width


# =============================================================================
# Minor density (brute force, tiny graphs only)
# =============================================================================

def minor_density_bruteforce(graph, max_n=10):
    """Max |E'|/|V'| over all simple minors, by exhaustive partition enumeration.

    Edge deletions never raise density so it suffices to enumerate vertex
    subsets and their partitions into connected blocks (contractions), then
    count distinct block pairs joined by at least one edge.
    """
    if graph.n > max_n:
        raise ValidationError(f"brute-force minor density capped at n={max_n}")
    adj_sets = [set() for _ in range(graph.n)]
    for (u, v, _w) in graph.edges:
        if u != v:
            adj_sets[u].add(v)
            adj_sets[v].add(u)

    def connected(block):
        block = set(block)
        start = next(iter(block))
        seen = {start}
        q = deque([start])
        while q:
            x = q.popleft()
            for y in adj_sets[x]:
                if y in block and y not in seen:
                    seen.add(y)
                    q.append(y)
        return len(seen) == len(block)

    best = 0.0
    nodes = list(range(graph.n))

    # Enumerate partitions of each element into: block index or "dropped".
    # Recursive growth keeps blocks connected via a final check per partition.
    def recurse(i, blocks):
        nonlocal best
        if i == len(nodes):
            kept = [b for b in blocks if b]
            if not kept or not all(connected(b) for b in kept):
                return
            which = {}
            for bi, b in enumerate(kept):
                for u in b:
                    which[u] = bi
            pairs = set()
            for (u, v, _w) in graph.edges:
                if u == v or u not in which or v not in which:
                    continue
                bu, bv = which[u], which[v]
                if bu != bv:
                    pairs.add((min(bu, bv), max(bu, bv)))
            best = max(best, len(pairs) / len(kept))
            return
        u = nodes[i]
        for b in blocks:
            b.append(u)
            recurse(i + 1, blocks)
            b.pop()
        blocks.append([u])
        recurse(i + 1, blocks)
        blocks.pop()
        recurse(i + 1, blocks)  # drop u

    recurse(0, [])
    return best


# =============================================================================
# File formats
# =============================================================================

def parse_graph_text(text, enforce_integral=True):
    """Parse 'n m W' header plus m 'u v w' lines into a WeightedGraph."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GraphFormatError("empty graph file")
    head = lines[0].split()
    if len(head) != 3:
        raise GraphFormatError("header must be 'n m W'")
    try:
        n, m, cap = int(head[0]), int(head[1]), int(head[2])
    except ValueError as exc:
        raise GraphFormatError(f"bad header: {exc}") from None
    if len(lines) - 1 != m:
        raise GraphFormatError(f"expected {m} edge lines, found {len(lines) - 1}")
    edges = []
    for ln in lines[1:]:
        tok = ln.split()
        if len(tok) != 3:
            raise GraphFormatError(f"bad edge line: {ln!r}")
        try:
            u, v = int(tok[0]), int(tok[1])
            w = int(tok[2]) if enforce_integral else float(tok[2])
        except ValueError as exc:
            raise GraphFormatError(f"bad edge line {ln!r}: {exc}") from None
        if enforce_integral and not (1 <= w <= cap):
            raise GraphFormatError(f"weight {w} outside 1..{cap}")
        edges.append((u, v, w))
    return WeightedGraph(n, edges, weight_cap=cap)


def format_graph_text(graph):
    cap = graph.weight_cap
    if cap is None:
        cap = max((int(round(w)) for (_u, _v, w) in graph.edges), default=1)
    out = [f"{graph.n} {graph.m} {int(cap)}"]
    for (u, v, w) in graph.edges:
        wtxt = str(int(w)) if float(w).is_integer() else repr(w)
        out.append(f"{u} {v} {wtxt}")
    return "\n".join(out) + "\n"


def load_graph(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph_text(fh.read())


def save_graph(graph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph_text(graph))


def parse_parts_text(text):
    """One part per line, node ids whitespace separated."""
    parts = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        try:
            parts.append([int(t) for t in ln.split()])
        except ValueError as exc:
            raise GraphFormatError(f"bad part line {ln!r}: {exc}") from None
    if not parts:
        raise GraphFormatError("no parts found")
    return Partition(parts)


def load_parts(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_parts_text(fh.read())
