"""Schur complement sparsification by steady-edge contraction or deletion.

The loop keeps a minor distribution whose Schur complement onto a terminal
set approximates the original one.  Each iteration splits edges so every
leverage score lands in [3/16, 13/16], selects a steady edge subset whose
members are electrically spread out (small localization sums) and carry a
bounded share of the terminal energy (variance condition), then contracts
each steady edge with probability equal to its approximate leverage score
and deletes it otherwise.  Contract-with-probability-leverage keeps the
expected pseudo-inverse fixed, which is what the concentration argument
turns into a spectral guarantee.

Estimators run through a pluggable Laplacian solver with the signature
solver(graph, columns) -> solutions so the same code serves the dense
oracle and the recursive solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import ValidationError, WeightedGraph, laplacian
from .minors import MinorDistribution, contract_edges, minor_matvec, validate_minor

THRESHOLD_CONST = 0.002
LEVERAGE_SKETCH_CONST = 9.0
CAUCHY_SKETCH_CONST = 16.0
VAR_BOUND_CONST = 32.0
LEV_DELTA = 0.1
HIGH_LEV = 13.0 / 16.0
LOW_LEV = 3.0 / 16.0
SPLIT_MARGIN = 1.1


def _graph_of(obj):
    return obj.minor if isinstance(obj, MinorDistribution) else obj


class OracleSolver:
    """Dense pseudo-inverse solver with per-graph caching and a call
    counter (counted in right-hand-side columns)."""

    def __init__(self):
        self.calls = 0
        self._cache = {}

    def __call__(self, graph, columns):
        key = id(graph)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not graph:
            self._cache = {key: (graph, np.linalg.pinv(laplacian(graph)))}
            hit = self._cache[key]
        cols = np.asarray(columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        self.calls += cols.shape[1]
        return hit[1] @ cols


def make_oracle_solver():
    return OracleSolver()


# =============================================================================
# Sketch estimators
# =============================================================================

@dataclass
class LeverageEstimates:
    scores: np.ndarray
    delta: float
    sketches: int


def _edge_arrays(graph):
    us = np.array([e[0] for e in graph.edges], dtype=int)
    vs = np.array([e[1] for e in graph.edges], dtype=int)
    ws = np.array([e[2] for e in graph.edges], dtype=float)
    return us, vs, ws


def approx_leverage_scores(dist, delta, solver, seed=0):
    """Random-projection leverage scores: lev_e = w_e ||W^1/2 B L+ b_e||^2,
    estimated with ceil(9 ln n / delta^2) +/-1 projections of the weighted
    incidence rows.  Self-loops score 0."""
    graph = _graph_of(dist)
    n = graph.n
    us, vs, ws = _edge_arrays(graph)
    nonloop = us != vs
    q = max(1, math.ceil(LEVERAGE_SKETCH_CONST * math.log(max(n, 2))
                         / (delta * delta)))
    rng = np.random.default_rng(seed)
    Q = rng.choice((-1.0, 1.0), size=(q, len(ws)))
    Q[:, ~nonloop] = 0.0
    sqw = np.sqrt(ws)
    rhs = np.zeros((n, q))
    np.add.at(rhs, us, (Q * sqw).T)
    np.subtract.at(rhs, vs, (Q * sqw).T)
    Y = solver(graph, rhs)
    diff = Y[us, :] - Y[vs, :]
    scores = ws * np.sum(diff * diff, axis=1) / q
    scores[~nonloop] = 0.0
    return LeverageEstimates(scores, delta, q)


def approx_column_sums(dist, edge_ids, delta, solver, seed=0, lev=None):
    """Per-edge localization sums over the given edge subset:
    sum_{f != e} |b_e^T L+ b_f| sqrt(w_e w_f), estimated by a Cauchy sketch
    (median of absolute projections estimates the l1 column norm, then the
    diagonal leverage term is subtracted)."""
    graph = _graph_of(dist)
    n = graph.n
    ids = [int(e) for e in edge_ids]
    if len(ids) <= 1:
        return np.zeros(len(ids))
    us, vs, ws = _edge_arrays(graph)
    su = us[ids]
    sv = vs[ids]
    sqw = np.sqrt(ws[ids])
    q = max(4, math.ceil(CAUCHY_SKETCH_CONST * math.log(max(n, 2)) ** 2))
    rng = np.random.default_rng(seed)
    C = rng.standard_cauchy((q, len(ids)))
    rhs = np.zeros((n, q))
    np.add.at(rhs, su, (C * sqw).T)
    np.subtract.at(rhs, sv, (C * sqw).T)
    Y = solver(graph, rhs)
    S = (Y[su, :] - Y[sv, :]) * sqw[:, None]
    totals = np.median(np.abs(S), axis=1)
    if lev is None:
        D = solver(graph, _pair_indicators(n, su, sv))
        diag = ws[ids] * (D[su, np.arange(len(ids))]
                          - D[sv, np.arange(len(ids))])
    else:
        diag = np.asarray(lev, dtype=float)[ids]
    return np.maximum(totals - diag, 0.0)


def _pair_indicators(n, us, vs):
    B = np.zeros((n, len(us)))
    B[us, np.arange(len(us))] += 1.0
    B[vs, np.arange(len(us))] -= 1.0
    return B


def _sc_apply(L, tlist, X):
    """SC(L, T) @ X through one grounded block solve."""
    n = L.shape[0]
    s = sorted(set(range(n)) - set(tlist))
    t = list(tlist)
    LTT = L[np.ix_(t, t)]
    out = LTT @ X
    if s:
        LST = L[np.ix_(s, t)]
        LSS = L[np.ix_(s, s)]
        try:
            sol = np.linalg.solve(LSS, LST @ X)
        except np.linalg.LinAlgError:
            # a deletion may have stranded a terminal-free component
            sol = np.linalg.lstsq(LSS, LST @ X, rcond=None)[0]
        out -= LST.T @ sol
    return out


def sc_energy_estimate(dist, terminals, e, solver, seed=0):
    """Estimate of w_e * b_e^T L+ [SC 0; 0 0] L+ b_e, the edge's share of
    terminal energy: one solver call plus a grounded block solve."""
    return float(_sc_energies(dist, terminals, [e], solver, seed)[0])


def _sc_energies(dist, terminals, edge_ids, solver, seed=0):
    graph = _graph_of(dist)
    n = graph.n
    tlist = sorted(int(t) for t in terminals)
    us, vs, ws = _edge_arrays(graph)
    ids = [int(e) for e in edge_ids]
    if not ids:
        return np.zeros(0)
    B = _pair_indicators(n, us[ids], vs[ids])
    Y = solver(graph, B)
    L = laplacian(graph)
    YT = Y[tlist, :]
    Z = _sc_apply(L, tlist, YT)
    return ws[ids] * np.sum(YT * Z, axis=0)


# =============================================================================
# Steady subsets
# =============================================================================

@dataclass
class SteadySet:
    edges: tuple
    alpha: float
    delta: float
    certificates: dict       # eid -> (localization est, variance est)
    tries: int


def find_steady(dist, terminals, delta, solver, seed=0, *,
                steady_c=1.0, paper_thresholds=False, lev=None,
                max_tries=10):
    """Sample candidate edges at rate alpha, then keep those passing the
    variance condition (energy share at most 16|T|/m, half the bound to
    absorb the estimator's factor 2) and the localization condition
    (cross-correlation sums at most delta/2 within the sample).

    Edges with both endpoints terminal never enter: contracting one would
    merge terminals.  Desk-scaled alpha is the default; the paper's
    delta/(1000 C log^2 m) rate hides behind ``paper_thresholds``.
    """
    graph = _graph_of(dist)
    tset = set(int(t) for t in terminals)
    us, vs, _ws = _edge_arrays(graph)
    cand = [e for e in range(graph.m)
            if us[e] != vs[e] and not (us[e] in tset and vs[e] in tset)]
    m = max(1, sum(1 for e in range(graph.m) if us[e] != vs[e]))
    if paper_thresholds:
        log2m = math.log(max(m, 2)) ** 2
        alpha = delta / (1000.0 * steady_c * log2m)
    else:
        alpha = min(0.25, delta / (4.0 * steady_c))
    var_bound = VAR_BOUND_CONST * max(len(tset), 1) / m
    last_reason = "no candidates"
    if not cand:
        return SteadySet((), alpha, delta, {}, 0)
    for t in range(1, max_tries + 1):
        rng = np.random.default_rng((seed, t, 911))
        picked = [e for e in cand if rng.random() < alpha]
        if not picked:
            last_reason = "empty sample"
            continue
        var_est = _sc_energies(dist, sorted(tset), picked, solver,
                               seed=seed + 13 * t)
        stage1 = [e for e, v in zip(picked, var_est)
                  if v <= var_bound / 2.0]
        if not stage1:
            last_reason = "variance filter emptied the sample"
            continue
        loc = approx_column_sums(dist, stage1, delta, solver,
                                 seed=seed + 37 * t, lev=lev)
        keep = [e for e, s in zip(stage1, loc) if s <= delta / 2.0]
        if keep:
            var_map = dict(zip(picked, var_est))
            loc_map = dict(zip(stage1, loc))
            certs = {e: (float(loc_map[e]), float(var_map[e]))
                     for e in keep}
            return SteadySet(tuple(keep), alpha, delta, certs, t)
        last_reason = "localization filter emptied the sample"
    raise ValidationError(
        f"no steady subset after {max_tries} tries ({last_reason})")


# =============================================================================
# Leverage-driven splitting and degenerate-structure collapse
# =============================================================================

@dataclass
class SplitResult:
    dist: MinorDistribution
    node_map: dict           # old minor node -> new minor node (absent: gone)
    lev: np.ndarray          # estimates carried to the new edges
    split_parallel: int
    split_series: int
    merged: int
    dropped_leaves: int
    check: float | None = None


def split_and_collapse(dist, lev, *, protect=(), verify=False):
    """Collapse degenerate structure, then split out-of-range edges.

    Collapse merges parallel edges (weights and leverages add), drops
    self-loops, and prunes non-protected leaves.  Splits then bring every
    leverage score into [3/16, 13/16]: scores above 13/16 (within the 1.1
    estimate margin) become two parallel half-weight copies with half the
    leverage each; scores below 3/16 become a series pair of double-weight
    edges through a fresh midpoint, each at (1+lev)/2.  Both operations
    are electrically exact, so the Schur complement onto the surviving
    original nodes is unchanged; congestion at most doubles.
    """
    g = dist.minor
    lev = np.asarray(lev, dtype=float)
    protect = set(int(p) for p in protect)
    pre = None
    if verify:
        pre = laplacian(g)

    # collapse: parallel merge, loop drop, leaf pruning
    groups = {}
    merged = 0
    for eid, (u, v, w) in enumerate(g.edges):
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in groups:
            ge = groups[key]
            ge[2] += w
            ge[3] += lev[eid]
            merged += 1
        else:
            groups[key] = [u, v, w, lev[eid], dist.edge_images[eid]]
    live = {key: ge for key, ge in groups.items()}
    degree = {}
    for (a, b) in live:
        degree[a] = degree.get(a, 0) + 1
        degree[b] = degree.get(b, 0) + 1
    dropped = 0
    removed_nodes = set()
    changed = True
    while changed:
        changed = False
        for key in list(live):
            a, b = key
            for x, y in ((a, b), (b, a)):
                if x in protect or x in removed_nodes:
                    continue
                if degree.get(x, 0) == 1:
                    del live[key]
                    degree[x] -= 1
                    degree[y] -= 1
                    removed_nodes.add(x)
                    dropped += 1
                    changed = True
                    break
            if changed:
                break
    for x in range(g.n):
        if degree.get(x, 0) == 0 and x not in protect and x not in removed_nodes:
            if g.n - len(removed_nodes) > 1:
                removed_nodes.add(x)

    keep_nodes = [x for x in range(g.n) if x not in removed_nodes]
    node_map = {x: i for i, x in enumerate(keep_nodes)}

    # split pass on the collapsed edge list
    new_edges = []
    new_images = []
    new_lev = []
    supers = [dist.super_nodes[x] for x in keep_nodes]
    leaders = [dist.leaders[x] for x in keep_nodes]
    trees = [dist.trees[x] for x in keep_nodes]
    sp_par = sp_ser = 0
    next_node = len(keep_nodes)
    for (a, b), (u, v, w, lv, image) in sorted(live.items()):
        nu, nv = node_map[u], node_map[v]
        if lv > HIGH_LEV / SPLIT_MARGIN:
            new_edges.append((nu, nv, w / 2.0))
            new_images.append(image)
            new_lev.append(lv / 2.0)
            new_edges.append((nu, nv, w / 2.0))
            new_images.append(image)
            new_lev.append(lv / 2.0)
            sp_par += 1
        elif lv < LOW_LEV * SPLIT_MARGIN:
            mid = next_node
            next_node += 1
            supers.append(dist.super_nodes[u])
            leaders.append(dist.leaders[u])
            trees.append(dist.trees[u])
            new_edges.append((nu, mid, 2.0 * w))
            new_images.append(("loop", dist.leaders[u]))
            new_lev.append((1.0 + lv) / 2.0)
            new_edges.append((mid, nv, 2.0 * w))
            new_images.append(image)
            new_lev.append((1.0 + lv) / 2.0)
            sp_ser += 1
        else:
            new_edges.append((nu, nv, w))
            new_images.append(image)
            new_lev.append(lv)
    h = WeightedGraph(next_node, new_edges)
    out = MinorDistribution(h, dist.host, tuple(supers), tuple(leaders),
                            tuple(trees), tuple(new_images))
    validate_minor(out)
    check = None
    if verify:
        from .oracle import schur_complement
        kept = [x for x in range(g.n) if x not in removed_nodes]
        sc_old = schur_complement(pre, kept)
        sc_new = schur_complement(laplacian(h), [node_map[x] for x in kept])
        check = float(np.max(np.abs(sc_old - sc_new)))
        scale = max(1.0, float(np.max(np.abs(sc_old))))
        if check > 1e-7 * scale:
            raise ValidationError(
                f"split/collapse moved the Schur complement by {check}")
    return SplitResult(out, node_map, np.array(new_lev), sp_par, sp_ser,
                       merged, dropped, check)


# =============================================================================
# Contraction / deletion with terminal protection
# =============================================================================

def contract_or_delete(dist, edge_ids, probs, terminals, seed=0):
    """One uniform draw per edge: contract below its probability, delete
    otherwise.  Contractions that would merge two terminals demote to
    plain keeps.  Returns (new dist, node map, info dict)."""
    g = dist.minor
    tset = set(int(t) for t in terminals)
    rng = np.random.default_rng(seed)
    want_contract = []
    want_delete = []
    for e, p in zip(edge_ids, probs):
        if rng.random() < p:
            want_contract.append(int(e))
        else:
            want_delete.append(int(e))
    parent = list(range(g.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    has_t = [u in tset for u in range(g.n)]
    contract = []
    demoted = 0
    for e in want_contract:
        u, v, _w = g.edges[e]
        ru, rv = find(u), find(v)
        if ru == rv:
            contract.append(e)
            continue
        if has_t[ru] and has_t[rv]:
            demoted += 1
            continue
        parent[max(ru, rv)] = min(ru, rv)
        has_t[min(ru, rv)] = has_t[ru] or has_t[rv]
        contract.append(e)
    new_dist, node_map = contract_edges(dist, contract) if contract \
        else (dist, {u: u for u in range(g.n)})
    # deletions refer to pre-contraction ids; surviving edges keep order
    contract_set = set(contract)
    old_to_new_eid = {}
    pos = 0
    for eid in range(g.m):
        if eid in contract_set:
            continue
        old_to_new_eid[eid] = pos
        pos += 1
    drop = {old_to_new_eid[e] for e in want_delete}
    if drop:
        h = new_dist.minor
        edges2, images2 = [], []
        for eid, edge in enumerate(h.edges):
            if eid in drop:
                continue
            edges2.append(edge)
            images2.append(new_dist.edge_images[eid])
        h2 = WeightedGraph(h.n, edges2, h.weight_cap,
                           tuple(h.label_of(u) for u in range(h.n)))
        new_dist = MinorDistribution(h2, new_dist.host,
                                     new_dist.super_nodes, new_dist.leaders,
                                     new_dist.trees, tuple(images2))
        validate_minor(new_dist)
    info = {"contracted": len(contract), "deleted": len(want_delete),
            "demoted": demoted}
    return new_dist, node_map, info


# =============================================================================
# The sparsification loop
# =============================================================================

@dataclass
class ApproxSCResult:
    dist: MinorDistribution
    terminals: tuple
    ledger: dict = field(default_factory=dict)


def edge_target(n, terminals, eps, const=THRESHOLD_CONST):
    logn = math.log(max(n, 2), 2)
    return max(len(terminals),
               math.ceil(const * len(terminals) * logn * logn / (eps * eps)))


def approx_sc(dist, terminals, eps, solver, seed=0, *,
              threshold_const=THRESHOLD_CONST, steady_c=1.0,
              paper_thresholds=False, lev_delta=LEV_DELTA,
              max_iters=None, service=None, audit=False,
              budget_frac=0.3, per_iter_cap=8):
    """Shrink the minor towards O(|T| log^2 n / eps^2) edges while keeping
    SC(minor, T) within exp(+/-eps) of the input's.

    Terminals survive every step: leaf pruning protects them, and the
    contraction guard demotes any contraction that would merge two.

    Every randomized removal spends from an error budget of eps*budget_frac:
    the steady certificate's energy share bounds how much one contraction
    or deletion can move terminal quadratic forms, and spends accumulate in
    quadrature because the coin flips form a martingale.  Merging parallel
    edges and pruning non-terminal leaves preserve the Schur complement
    exactly, so only coin-driven removals are charged.  The loop stops at
    the edge target, an exhausted budget, or a stall, whichever comes
    first, and records which in the ledger.
    """
    if eps <= 0 or eps > 0.5:
        raise ValidationError("eps must be in (0, 0.5]")
    g0 = dist.minor
    T0 = tuple(int(t) for t in terminals)
    if any(t < 0 or t >= g0.n for t in T0):
        raise ValidationError("terminal outside the minor")
    target = edge_target(g0.n, T0, eps, threshold_const)
    if max_iters is None:
        alpha_guess = min(0.25, eps / (4.0 * steady_c))
        max_iters = min(200, math.ceil(4.0 * math.log(max(g0.m, 2))
                                       / alpha_guess))
    cur = dist
    T = T0
    rng = np.random.default_rng(seed)
    iters = 0
    rounds = 0
    solver_calls0 = getattr(solver, "calls", 0)
    history = []
    budget = eps * budget_frac
    spend_cap = budget / 2.0
    spent_sq = 0.0
    stall = 0
    stop = "max_iters"
    while iters < max_iters:
        m_live = sum(1 for (u, v, _w) in cur.minor.edges if u != v)
        if m_live <= target:
            stop = "edge_target"
            break
        if spent_sq >= budget * budget:
            stop = "budget"
            break
        if stall >= 20:
            stop = "stalled"
            break
        iters += 1
        sub = int(rng.integers(1 << 30))
        lev = approx_leverage_scores(cur, lev_delta, solver, seed=sub)
        sp = split_and_collapse(cur, lev.scores, protect=T,
                                verify=audit and cur.minor.n <= 80)
        T = tuple(sp.node_map[t] for t in T)
        cur = sp.dist
        try:
            steady = find_steady(cur, T, eps, solver, seed=sub + 1,
                                 steady_c=steady_c,
                                 paper_thresholds=paper_thresholds,
                                 lev=sp.lev)
        except ValidationError:
            stall += 1
            history.append({"m": m_live, "steady": 0})
            continue
        # cheapest certified edges first, stay inside the quadrature budget
        ranked = sorted(steady.edges, key=lambda e: steady.certificates[e][1])
        picked = []
        acc = spent_sq
        for e in ranked:
            s = steady.certificates[e][1]
            if s > spend_cap:
                break
            if acc + s * s > budget * budget:
                break
            acc += s * s
            picked.append(e)
            if len(picked) >= per_iter_cap:
                break
        if not picked:
            stall += 1
            history.append({"m": m_live, "steady": len(steady.edges),
                            "picked": 0})
            continue
        stall = 0
        spent_sq = acc
        probs = np.clip(sp.lev[picked], 0.0, 1.0)
        cur, nmap, info = contract_or_delete(cur, picked, probs, T,
                                             seed=sub + 2)
        T = tuple(nmap[t] for t in T)
        if len(set(T)) != len(T0):
            raise ValidationError("terminals merged despite the guard")
        if service is not None:
            _y, q = minor_matvec(cur, np.zeros(cur.minor.n), service=service)
            rounds += 4 * q
        history.append({"m": m_live, "steady": len(steady.edges),
                        "picked": len(picked), **info})
    m_final = sum(1 for (u, v, _w) in cur.minor.edges if u != v)
    ledger = {"iterations": iters, "edge_target": target,
              "edges_final": m_final, "stop": stop,
              "budget": budget, "budget_spent": math.sqrt(spent_sq),
              "solver_calls": getattr(solver, "calls", 0) - solver_calls0,
              "rounds": rounds, "history": history}
    if audit:
        from .oracle import generalized_eig_range, schur_complement
        sc_old = schur_complement(laplacian(g0), list(T0))
        sc_new = schur_complement(laplacian(cur.minor), list(T))
        ledger["eig_range"] = generalized_eig_range(sc_old, sc_new)
    return ApproxSCResult(cur, T, ledger)
