"""Minor distributions: embeddings of a small graph into a host network.

A distribution assigns every minor node u a connected host super-node set
S(u) with a leader and a spanning tree, and every minor edge an image that is
either a host edge straddling the two super-nodes or a self-loop marker at a
shared host node (super-nodes of different minor nodes may overlap).  The
congestion rho is the larger of

  node congestion   max over host nodes of how many super-nodes contain it,
  edge congestion   max over host edges of image multiplicity plus tree usage,

and is what every round bound in the aggregation layer is parameterized by.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import ValidationError, WeightedGraph


@dataclass(frozen=True)
class MinorDistribution:
    minor: WeightedGraph
    host: WeightedGraph
    super_nodes: tuple    # per minor node: frozenset of host nodes
    leaders: tuple        # per minor node: host node id
    trees: tuple          # per minor node: tuple of host edge ids
    edge_images: tuple    # per minor edge: ("edge", host_eid) or ("loop", host_node)

    def __post_init__(self):
        object.__setattr__(self, "super_nodes",
                           tuple(frozenset(s) for s in self.super_nodes))
        object.__setattr__(self, "leaders", tuple(int(x) for x in self.leaders))
        object.__setattr__(self, "trees",
                           tuple(tuple(sorted(t)) for t in self.trees))
        object.__setattr__(self, "edge_images", tuple(self.edge_images))


@dataclass(frozen=True)
class MinorReport:
    node_congestion: int
    edge_congestion: int

    @property
    def rho(self):
        return max(self.node_congestion, self.edge_congestion, 1)


def validate_minor(dist):
    """Structural validation; returns a MinorReport with the congestion numbers."""
    G, H = dist.minor, dist.host
    if len(dist.super_nodes) != G.n or len(dist.leaders) != G.n \
            or len(dist.trees) != G.n or len(dist.edge_images) != G.m:
        raise ValidationError("minor distribution has mismatched component sizes")
    node_load = np.zeros(H.n, dtype=int)
    edge_load = np.zeros(H.m, dtype=int)
    for u in range(G.n):
        S = dist.super_nodes[u]
        if not S:
            raise ValidationError(f"super-node of {u} is empty")
        if not all(0 <= x < H.n for x in S):
            raise ValidationError(f"super-node of {u} out of host range")
        if dist.leaders[u] not in S:
            raise ValidationError(f"leader of {u} outside its super-node")
        for x in S:
            node_load[x] += 1
        tree = dist.trees[u]
        if len(tree) != len(S) - 1:
            raise ValidationError(f"tree of {u} has {len(tree)} edges for |S|={len(S)}")
        reached = {dist.leaders[u]}
        adj = {}
        for eid in tree:
            a, b, _w = H.edges[eid]
            if a == b or a not in S or b not in S:
                raise ValidationError(f"tree edge {eid} of {u} leaves the super-node")
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
            edge_load[eid] += 1
        q = deque([dist.leaders[u]])
        while q:
            x = q.popleft()
            for y in adj.get(x, ()):
                if y not in reached:
                    reached.add(y)
                    q.append(y)
        if reached != set(S):
            raise ValidationError(f"tree of {u} does not span its super-node")
    for eid, ((u, v, _w), image) in enumerate(zip(G.edges, dist.edge_images)):
        kind, ref = image
        if kind == "edge":
            a, b, _hw = H.edges[ref]
            Su, Sv = dist.super_nodes[u], dist.super_nodes[v]
            if not ((a in Su and b in Sv) or (a in Sv and b in Su)):
                raise ValidationError(f"image of minor edge {eid} missing its super-nodes")
            edge_load[ref] += 1
        elif kind == "loop":
            if ref not in dist.super_nodes[u] or ref not in dist.super_nodes[v]:
                raise ValidationError(f"loop image of minor edge {eid} not in both super-nodes")
        else:
            raise ValidationError(f"unknown image kind {kind!r}")
    return MinorReport(int(node_load.max(initial=0)), int(edge_load.max(initial=0)))


def identity_minor(graph):
    """Every graph 1-minor distributes into itself."""
    images = [("loop", graph.edges[i][0]) if graph.edges[i][0] == graph.edges[i][1]
              else ("edge", i) for i in range(graph.m)]
    return MinorDistribution(
        minor=graph, host=graph,
        super_nodes=tuple(frozenset([u]) for u in range(graph.n)),
        leaders=tuple(range(graph.n)),
        trees=tuple(() for _ in range(graph.n)),
        edge_images=tuple(images))


def _respan(host, nodes, edge_ids, root):
    """BFS spanning tree of `nodes` using only the given host edges."""
    adj = {}
    for eid in set(edge_ids):
        a, b, _w = host.edges[eid]
        if a == b:
            continue
        adj.setdefault(a, []).append((b, eid))
        adj.setdefault(b, []).append((a, eid))
    seen = {root}
    tree = []
    q = deque([root])
    while q:
        x = q.popleft()
        for (y, eid) in sorted(adj.get(x, ())):
            if y in seen or y not in nodes:
                continue
            seen.add(y)
            tree.append(eid)
            q.append(y)
    if seen != set(nodes):
        raise ValidationError("collected host edges do not connect the super-node")
    return tuple(tree)


def compose_minors(inner, outer):
    """Compose G1 -> G2 (inner) with G2 -> host (outer) into G1 -> host.

    Congestion multiplies: the result is at worst (rho_inner * rho_outer)-
    congested, which validate_minor will confirm on request.
    """
    if inner.host is not outer.minor and inner.host.edges != outer.minor.edges:
        raise ValidationError("inner host and outer minor do not match")
    host = outer.host
    super_nodes, leaders, trees = [], [], []
    for u in range(inner.minor.n):
        members = inner.super_nodes[u]
        S = set()
        collected = []
        for x in members:
            S.update(outer.super_nodes[x])
            collected.extend(outer.trees[x])
        for eid in inner.trees[u]:
            kind, ref = outer.edge_images[eid]
            if kind == "edge":
                collected.append(ref)
        leader = outer.leaders[inner.leaders[u]]
        super_nodes.append(frozenset(S))
        leaders.append(leader)
        trees.append(_respan(host, S, collected, leader))
    images = []
    for eid in range(inner.minor.m):
        kind, ref = inner.edge_images[eid]
        if kind == "loop":
            images.append(("loop", outer.leaders[ref]))
        else:
            images.append(outer.edge_images[ref])
    return MinorDistribution(inner.minor, host, tuple(super_nodes), tuple(leaders),
                             tuple(trees), tuple(images))


def contract_edges(dist, edge_ids):
    """Contract the given minor edges; returns (new distribution, old->new node map).

    Non-contracted edges survive (as self-loops when both endpoints merge);
    merged super-nodes are stitched through the contracted edges' images.  The
    new node numbering sorts components by their minimum old member, and each
    new node keeps the minimum member's label.
    """
    G = dist.minor
    parent = list(range(G.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    contract_set = set(edge_ids)
    for eid in contract_set:
        u, v, _w = G.edges[eid]
        if u == v:
            continue
        ra, rb = find(u), find(v)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    comps = {}
    for u in range(G.n):
        comps.setdefault(find(u), []).append(u)
    roots = sorted(comps)
    node_map = {}
    for new_id, r in enumerate(roots):
        for u in comps[r]:
            node_map[u] = new_id

    super_nodes, leaders, trees, labels = [], [], [], []
    for r in roots:
        members = comps[r]
        S = set()
        collected = []
        for u in members:
            S.update(dist.super_nodes[u])
            collected.extend(dist.trees[u])
        for eid in contract_set:
            u, v, _w = G.edges[eid]
            if find(u) == r and u != v:
                kind, ref = dist.edge_images[eid]
                if kind == "edge":
                    collected.append(ref)
        leader = dist.leaders[min(members)]
        super_nodes.append(frozenset(S))
        leaders.append(leader)
        trees.append(_respan(dist.host, S, collected, leader))
        labels.append(G.label_of(min(members)))

    new_edges, new_images = [], []
    for eid, (u, v, w) in enumerate(G.edges):
        if eid in contract_set:
            continue
        new_edges.append((node_map[u], node_map[v], w))
        new_images.append(dist.edge_images[eid])
    minor = WeightedGraph(len(roots), new_edges, G.weight_cap, tuple(labels))
    out = MinorDistribution(minor, dist.host, tuple(super_nodes), tuple(leaders),
                            tuple(trees), tuple(new_images))
    return out, node_map


def image_edge_congestion(dist):
    """Max host-edge multiplicity counting images only (drives matvec exchange cost)."""
    load = {}
    for image in dist.edge_images:
        kind, ref = image
        if kind == "edge":
            load[ref] = load.get(ref, 0) + 1
    return max(load.values(), default=0)


def minor_matvec(dist, x, coeffs=None, diag=None, service=None):
    """y = A x for A supported on the minor's edges plus a diagonal.

    A[u,v] accumulates coeffs[e] over edges e between u and v (symmetric) and
    A[u,u] adds diag[u].  Defaults give the minor's Laplacian.  The value is
    computed exactly; the distributed schedule (broadcast x from leaders,
    exchange across image edges, aggregate partial sums) is charged through
    the optional aggregation service and returned as a round count.
    """
    G = dist.minor
    x = np.asarray(x, dtype=float)
    if coeffs is None:
        coeffs = [-w for (_u, _v, w) in G.edges]
    if diag is None:
        diag = np.zeros(G.n)
        for (u, v, w) in G.edges:
            if u != v:
                diag[u] += w
                diag[v] += w
    y = np.asarray(diag, dtype=float) * x
    for eid, (u, v, _w) in enumerate(G.edges):
        if u == v:
            continue
        c = coeffs[eid]
        y[u] += c * x[v]
        y[v] += c * x[u]
    rounds = 0
    if service is not None:
        rounds += service.broadcast(dist, {u: x[u] for u in range(G.n)}).rounds
        rounds += image_edge_congestion(dist)
        contributions = [{h: 0.0 for h in dist.super_nodes[u]} for u in range(G.n)]
        for u in range(G.n):
            contributions[u][dist.leaders[u]] = float(y[u])
        rounds += service.aggregate(dist, contributions, op="sum").rounds
    return y, rounds
