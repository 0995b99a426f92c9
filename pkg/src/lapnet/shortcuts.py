"""Copy graphs, shortcut sets, and the copy-to-host simulation wrapper.

A congested part family (parts may overlap; a node can sit in up to rho of
them) is flattened into a copy graph: every node gets one copy per part it
belongs to (plus a spare copy when it is in none) and every host edge expands
to all copy pairs.  Parts lift to disjoint parts over copies, the hop
diameter grows by at most one, and any width-w decomposition of the host
lifts to width rho*(w+1)-1.  Copy-graph protocols run on the host through a
deterministic slot schedule that multiplexes the up-to-rho^2 copy pairs of a
host edge, so one copy round costs rho^2 host rounds.

Shortcut sets augment each part with extra usable edges; their quality is
congestion (max edge reuse across parts) plus dilation (max augmented part
diameter).  Three providers ship: empty, the sqrt-threshold BFS-tree
baseline, and a tree-decomposition-guided provider for families that carry a
decomposition.  Construction of good shortcuts from scratch is out of scope;
providers are pluggable and their achieved quality is measured, not assumed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .graphs import (Partition, TreeDecomposition, ValidationError, WeightedGraph,
                     bfs_tree)
from .netsim import NodeProgram, Step


# =============================================================================
# Shortcut sets and quality
# =============================================================================

@dataclass(frozen=True)
class ShortcutSet:
    """Per part: a tuple of extra edge ids of the communication graph."""

    edge_sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "edge_sets",
                           tuple(tuple(sorted(set(es))) for es in self.edge_sets))


@dataclass(frozen=True)
class ShortcutQuality:
    congestion: int
    dilation: int

    @property
    def quality(self):
        return self.congestion + self.dilation


def part_subgraph_edges(graph, part, extra_edge_ids=()):
    """Edge ids usable by a part: induced on the part plus its shortcuts."""
    part = set(part)
    eids = set(extra_edge_ids)
    for eid, (u, v, _w) in enumerate(graph.edges):
        if u != v and u in part and v in part:
            eids.add(eid)
    return eids


def _diameter_over_edges(graph, nodes, edge_ids):
    """Hop diameter of the subgraph given by edge_ids, measured over ``nodes``."""
    adj = {}
    touched = set(nodes)
    for eid in edge_ids:
        a, b, _w = graph.edges[eid]
        if a == b:
            continue
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
        touched.update((a, b))
    best = 0
    for s in nodes:
        dist = {s: 0}
        q = deque([s])
        while q:
            x = q.popleft()
            for y in adj.get(x, ()):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    q.append(y)
        if any(t not in dist for t in nodes):
            return math.inf
        best = max(best, max(dist[t] for t in nodes))
    return best


def shortcut_quality(graph, partition, shortcuts):
    """Measured congestion/dilation of a shortcut set for a part family."""
    if len(shortcuts.edge_sets) != len(partition.parts):
        raise ValidationError("one shortcut edge set per part required")
    load = {}
    for es in shortcuts.edge_sets:
        for eid in es:
            load[eid] = load.get(eid, 0) + 1
    dilation = 0
    for part, es in zip(partition.parts, shortcuts.edge_sets):
        eids = part_subgraph_edges(graph, part, es)
        dilation = max(dilation, _diameter_over_edges(graph, part, eids))
    return ShortcutQuality(max(load.values(), default=0), dilation)


# =============================================================================
# Providers
# =============================================================================

def empty_provider(graph, partition, decomposition=None, seed=0):
    return ShortcutSet(tuple(() for _ in partition.parts))


def baseline_provider(graph, partition, decomposition=None, seed=0):
    """Parts up to sqrt(n) keep their own trees; larger parts share the BFS tree."""
    threshold = math.isqrt(graph.n)
    bfs_edges = None
    sets = []
    for part in partition.parts:
        if len(part) <= threshold:
            sets.append(())
        else:
            if bfs_edges is None:
                _parent, bfs_edges = bfs_tree(graph, 0)
            sets.append(tuple(bfs_edges))
    return ShortcutSet(tuple(sets))


def treedec_provider(graph, partition, decomposition=None, seed=0):
    """Shortcuts induced on the bags of the minimal decomposition subtree per part."""
    if decomposition is None:
        raise ValidationError("tree-decomposition provider needs a decomposition")
    bags = decomposition.bags
    b = len(bags)
    adj = [[] for _ in range(b)]
    for (a, c) in decomposition.tree_edges:
        adj[a].append(c)
        adj[c].append(a)
    node_bags = {}
    for i, bag in enumerate(bags):
        for u in bag:
            node_bags.setdefault(u, []).append(i)
    sets = []
    for part in partition.parts:
        marked = set()
        for u in part:
            marked.update(node_bags.get(u, ()))
        if not marked:
            sets.append(())
            continue
        # minimal subtree covering the marked bags: prune unmarked leaves
        start = next(iter(marked))
        parent = {start: None}
        order = [start]
        q = deque([start])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in parent:
                    parent[y] = x
                    order.append(y)
                    q.append(y)
        keep = set(marked)
        for x in reversed(order):
            if x in keep and parent[x] is not None:
                keep.add(parent[x])
        # trim: repeatedly drop non-marked leaves of the kept subtree
        changed = True
        while changed:
            changed = False
            for x in list(keep):
                if x in marked:
                    continue
                deg = sum(1 for y in adj[x] if y in keep)
                if deg <= 1:
                    keep.remove(x)
                    changed = True
        span = set()
        for x in keep:
            span.update(bags[x])
        eids = tuple(eid for eid, (u2, v2, _w) in enumerate(graph.edges)
                     if u2 != v2 and u2 in span and v2 in span)
        sets.append(eids)
    return ShortcutSet(tuple(sets))


PROVIDERS = {
    "empty": empty_provider,
    "baseline": baseline_provider,
    "treedec": treedec_provider,
}


def get_provider(name):
    try:
        return PROVIDERS[name]
    except KeyError:
        raise ValidationError(f"unknown shortcut provider {name!r}") from None


# =============================================================================
# Copy graphs
# =============================================================================

@dataclass(frozen=True)
class CopyGraph:
    host: WeightedGraph
    graph: WeightedGraph          # the copy graph
    copies: tuple                 # per copy: (host node, part id or None)
    copy_lists: tuple             # per host node: tuple of copy ids (local order)
    edge_info: tuple              # per copy edge: (host_eid, local_i, local_j)
    parts: Partition              # lifted parts over copy ids
    rho: int                      # max copies per host node

    def copy_id(self, host_node, part):
        for c in self.copy_lists[host_node]:
            if self.copies[c][1] == part:
                return c
        raise KeyError((host_node, part))


def build_copy_graph(host, partition):
    """Expand (host, overlapping parts) into the flattened copy graph."""
    n = host.n
    membership = [[] for _ in range(n)]
    for pid, part in enumerate(partition.parts):
        for u in part:
            if not (0 <= u < n):
                raise ValidationError(f"part {pid} has out-of-range node {u}")
            membership[u].append(pid)
    copies = []
    copy_lists = []
    for u in range(n):
        ids = []
        if membership[u]:
            for pid in sorted(membership[u]):
                ids.append(len(copies))
                copies.append((u, pid))
        else:
            ids.append(len(copies))
            copies.append((u, None))
        copy_lists.append(tuple(ids))
    edges = []
    edge_info = []
    for heid, (u, v, _w) in enumerate(host.edges):
        if u == v:
            continue
        for i, cu in enumerate(copy_lists[u]):
            for j, cv in enumerate(copy_lists[v]):
                edges.append((cu, cv, 1.0))
                edge_info.append((heid, i, j))
    graph = WeightedGraph(len(copies), edges)
    lifted = []
    for pid, part in enumerate(partition.parts):
        lifted.append([c for c in range(len(copies)) if copies[c][1] == pid])
    rho = max((len(cl) for cl in copy_lists), default=1)
    return CopyGraph(host, graph, tuple(copies), tuple(copy_lists),
                     tuple(edge_info), Partition(tuple(lifted)), rho)


def lift_tree_decomposition(copygraph, dec):
    """Lift a host decomposition: each bag picks up every copy of its nodes.

    Width grows from w to at most rho*(w+1) - 1.
    """
    bags = []
    for bag in dec.bags:
        lifted = set()
        for u in bag:
            lifted.update(copygraph.copy_lists[u])
        bags.append(frozenset(lifted))
    return TreeDecomposition(tuple(bags), dec.tree_edges)


# =============================================================================
# Copy-to-host simulation wrapper
# =============================================================================

class CopyHostProgram(NodeProgram):
    """Simulates all copies of one host node under the rho^2 slot schedule.

    In host round R = W*rho^2 + s, slot s = i*rho + j lets the copy with local
    index i send one message to the neighboring copy with local index j across
    each incident host edge (both directions share the slot).  Copy steps run
    at the start of each window on the messages accumulated during the
    previous window, so the receiver decodes the sending copy from the slot
    index alone and payloads cross unchanged.
    """

    def __init__(self, node_id, n, copygraph, copy_programs):
        super().__init__(node_id, n)
        self.cg = copygraph
        self.local_ids = copygraph.copy_lists[node_id]
        self.programs = {c: copy_programs[c] for c in self.local_ids}
        self.rho = copygraph.rho
        self.window = self.rho * self.rho
        self.copy_round = 0
        self.halted_copies = set()
        self.inboxes = {c: {} for c in self.local_ids}
        self.scheduled = {}   # slot -> list of (neighbor host id, payload)
        # neighbor host node -> their copy ids in local-index order
        self.nbr_copies = {}
        for (v, _w, _eid) in copygraph.host.neighbors(node_id):
            self.nbr_copies[v] = copygraph.copy_lists[v]
        self.copy_edges = set()
        for c in self.local_ids:
            for (cv, _w, _eid) in copygraph.graph.neighbors(c):
                self.copy_edges.add((c, cv))

    def _deliver(self, local_inbox, sub):
        # A message arriving at sub-round s was sent in slot s-1 (mod window).
        slot = (sub - 1) % self.window
        i_send, j_recv = divmod(slot, self.rho)
        for (src_host, payload) in local_inbox.items():
            senders = self.nbr_copies.get(src_host, ())
            if i_send >= len(senders) or j_recv >= len(self.local_ids):
                continue
            self.inboxes[self.local_ids[j_recv]][senders[i_send]] = payload

    def step(self, round_no, local_inbox, global_inbox):
        sub = round_no % self.window
        if local_inbox:
            self._deliver(local_inbox, sub)
        if sub == 0:
            self.scheduled = {}
            for i_local, c in enumerate(self.local_ids):
                if c in self.halted_copies:
                    continue
                inbox = dict(sorted(self.inboxes[c].items()))
                self.inboxes[c] = {}
                result = self.programs[c].step(self.copy_round, inbox, [])
                if result is None:
                    result = Step()
                for dst_copy, msg in (result.local or {}).items():
                    if (c, dst_copy) not in self.copy_edges:
                        raise ValidationError(
                            f"copy {c} sent to non-neighbor copy {dst_copy}")
                    v_host, _part = self.cg.copies[dst_copy]
                    j_local = self.cg.copy_lists[v_host].index(dst_copy)
                    slot = i_local * self.rho + j_local
                    self.scheduled.setdefault(slot, []).append((v_host, msg))
                if result.halt:
                    self.halted_copies.add(c)
            self.copy_round += 1
        out = {}
        for (v_host, msg) in self.scheduled.get(sub, ()):
            if v_host in out:
                raise ValidationError("slot collision in copy schedule")
            out[v_host] = msg
        pending = any(s > sub and msgs for s, msgs in self.scheduled.items())
        halt = (not out and not pending
                and len(self.halted_copies) == len(self.local_ids))
        return Step(local=out, halt=halt)


def wrap_for_host(copygraph, copy_programs):
    """One host program per host node, multiplexing that node's copies."""
    n = copygraph.host.n
    return [CopyHostProgram(u, n, copygraph, copy_programs) for u in range(n)]
