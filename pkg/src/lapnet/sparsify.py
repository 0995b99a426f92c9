"""Spectral sparsification with two interchangeable engines.

The spanner engine packs edge-disjoint Baswana-Sen spanners into a bundle,
keeps the bundle at its current weights, and subsamples everything else at
probability 1/4 with weight 4w, repeating on the sample.  The oracle engine
keeps each edge independently with probability proportional to its exact
leverage score.  Both routes audit the result against the dense operator and
escalate their budget (more spanners per bundle, higher sampling constant)
until the requested approximation holds, so callers get a certified output
or an error, never a silent miss.

Trees and near-trees pass through unchanged: every bridge has leverage one
and a spanner always spans, so connectivity survives either engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import ValidationError, WeightedGraph, laplacian
from .minors import MinorDistribution, minor_matvec
from .oracle import leverage_scores_exact, spectral_approx_check


# =============================================================================
# Baswana-Sen spanners
# =============================================================================

def baswana_sen_spanner(graph, k=None, seed=0, skip=()):
    """Edge ids of a (2k-1)-spanner; k defaults to ceil(log2 n).

    ``skip`` marks edges treated as absent, which is how bundles extract
    edge-disjoint spanners.  Returns (edge_ids, iterations).
    """
    n = graph.n
    if n <= 1:
        return (), 0
    if k is None:
        k = max(1, math.ceil(math.log2(n)))
    rng = np.random.default_rng(seed)
    p_sample = n ** (-1.0 / k)
    center = list(range(n))
    removed = set(skip)
    for eid, (u, v, _w) in enumerate(graph.edges):
        if u == v:
            removed.add(eid)
    spanner = set()

    def live_by_cluster(v):
        best = {}
        for (u, w, eid) in graph.neighbors(v):
            if eid in removed or center[u] is None:
                continue
            c = center[u]
            if c == center[v]:
                removed.add(eid)
                continue
            if c not in best or (w, eid) < best[c][:2]:
                best[c] = (w, eid, u)
        return best

    def drop_edges_to(v, cluster):
        for (u, _w, eid) in graph.neighbors(v):
            if center[u] == cluster:
                removed.add(eid)

    iterations = 0
    for _ in range(max(0, k - 1)):
        iterations += 1
        clusters = sorted({c for c in center if c is not None})
        sampled = {c for c in clusters if rng.random() < p_sample}
        new_center = list(center)
        for v in range(n):
            if center[v] is None or center[v] in sampled:
                continue
            best = live_by_cluster(v)
            hit = {c: t for c, t in best.items() if c in sampled}
            if not hit:
                for c, (w, eid, _u) in sorted(best.items()):
                    spanner.add(eid)
                    drop_edges_to(v, c)
                new_center[v] = None
            else:
                cstar = min(hit, key=lambda c: (hit[c][0], c))
                wstar, estar, _u = hit[cstar]
                spanner.add(estar)
                new_center[v] = cstar
                drop_edges_to(v, cstar)
                for c, (w, eid, _u) in sorted(best.items()):
                    if c != cstar and (w, eid) < (wstar, estar):
                        spanner.add(eid)
                        drop_edges_to(v, c)
        center = new_center
    # final joining: lightest edge per remaining neighboring cluster
    iterations += 1
    for v in range(n):
        if center[v] is None:
            continue
        for c, (w, eid, _u) in sorted(live_by_cluster(v).items()):
            spanner.add(eid)
            drop_edges_to(v, c)
    return tuple(sorted(spanner)), iterations


def spanner_bundle(graph, t, seed=0):
    """t edge-disjoint spanners; returns (edge ids, total iterations)."""
    taken = set()
    iters = 0
    for i in range(t):
        ids, it = baswana_sen_spanner(graph, seed=seed + i, skip=taken)
        iters += it
        if not ids:
            break
        before = len(taken)
        taken.update(ids)
        if len(taken) == before:
            break
    return tuple(sorted(taken)), iters


# =============================================================================
# The two sparsifier engines
# =============================================================================

DEFAULT_ORACLE_CONST = 4.0
BUNDLE_CONST = 1.0 / 32.0
SUBSAMPLE_KEEP = 0.25


@dataclass
class SparsifyResult:
    graph: WeightedGraph
    origin: tuple          # per output edge: edge id in the input graph
    engine: str
    eps: float
    escalations: int
    rounds: int
    eig_range: tuple | None = None
    extras: dict = field(default_factory=dict)


def _oracle_pass(graph, eps, const, rng):
    lev = leverage_scores_exact(graph)
    logn = math.log(max(graph.n, 2))
    edges, origin = [], []
    for eid, (u, v, w) in enumerate(graph.edges):
        if u == v:
            continue
        p = min(1.0, const * lev[eid] * logn / (eps * eps))
        if p >= 1.0 or rng.random() < p:
            edges.append((u, v, w / p))
            origin.append(eid)
    return edges, origin


def _spanner_pass(graph, eps, t, seed, service_charge):
    # live edges carry (input edge id, scale); bundles freeze, the rest
    # subsamples at 1/4 with weight made whole again by the 4x scale
    live = [(eid, 1.0) for eid, (u, v, w) in enumerate(graph.edges) if u != v]
    rng = np.random.default_rng(seed)
    out = []
    level = 0
    rounds = 0
    while live:
        scaled = WeightedGraph(
            graph.n,
            [(graph.edges[eid][0], graph.edges[eid][1], graph.edges[eid][2] * s)
             for (eid, s) in live])
        bundle, iters = spanner_bundle(scaled, t, seed=seed + 101 * level)
        rounds += service_charge(iters)
        bundle = set(bundle)
        rest = []
        for i, (eid, s) in enumerate(live):
            if i in bundle:
                out.append((eid, s))
            elif rng.random() < SUBSAMPLE_KEEP:
                rest.append((eid, s / SUBSAMPLE_KEEP))
        if not rest:
            break
        if len(rest) <= 2 * graph.n or level >= 60:
            out.extend(rest)
            break
        live = rest
        level += 1
    edges = [(graph.edges[eid][0], graph.edges[eid][1], graph.edges[eid][2] * s)
             for (eid, s) in out]
    return edges, [eid for (eid, _s) in out], level, rounds


def spectral_sparsify(graph, eps, *, engine="oracle", seed=0, dist=None,
                      service=None, audit=True, max_escalations=3):
    """Certified eps-sparsifier of a connected weighted multigraph.

    Self-loops are dropped.  When a minor distribution and service are given,
    the distributed schedule of each construction pass is charged through the
    service and included in the returned rounds.
    """
    if engine not in ("oracle", "spanner"):
        raise ValidationError(f"unknown sparsifier engine {engine!r}")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    L = laplacian(graph) if audit else None
    rounds = 0

    def service_charge(times):
        if service is None or dist is None:
            return 0
        _y, r = minor_matvec(dist, np.zeros(dist.minor.n), service=service)
        return r * times

    escalations = 0
    const = DEFAULT_ORACLE_CONST
    t = max(1, math.ceil(BUNDLE_CONST * math.log2(max(graph.n, 2)) ** 2
                         / (eps * eps)))
    while True:
        salt = seed + 7919 * escalations
        if engine == "oracle":
            rng = np.random.default_rng(salt)
            edges, origin = _oracle_pass(graph, eps, const, rng)
            rounds += service_charge(1)
            extras = {"const": const}
        else:
            edges, origin, levels, r = _spanner_pass(graph, eps, t, salt,
                                                     service_charge)
            rounds += r
            extras = {"bundle_size": t, "levels": levels}
        h = WeightedGraph(graph.n, edges, graph.weight_cap, graph.labels)
        if not audit:
            return SparsifyResult(h, tuple(origin), engine, eps, escalations,
                                  rounds, None, extras)
        ok, lo, hi = spectral_approx_check(L, laplacian(h), eps)
        if ok:
            return SparsifyResult(h, tuple(origin), engine, eps, escalations,
                                  rounds, (lo, hi), extras)
        escalations += 1
        if escalations > max_escalations:
            raise ValidationError(
                f"sparsifier missed eps={eps} after {escalations - 1} "
                f"escalations (range [{lo:.4f}, {hi:.4f}])")
        if engine == "oracle":
            const *= 2.0
        else:
            t *= 2


def restrict_distribution(dist, result):
    """Swap a distribution's minor for its sparsifier: same super-nodes,
    images filtered to the surviving edges."""
    return MinorDistribution(
        result.graph, dist.host, dist.super_nodes, dist.leaders, dist.trees,
        tuple(dist.edge_images[eid] for eid in result.origin))
