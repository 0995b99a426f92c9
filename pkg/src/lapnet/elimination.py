"""Terminal elimination by diagonally dominant subsets and random walks.

One elimination round picks a strongly diagonally dominant node subset F,
replaces the F-block inverse by a short Jacobi series, and replaces the
Schur complement onto the remaining terminals by a random-walk sparsifier:
every edge spawns walks from both endpoints that stop at the first
terminal, and each pair of walks contributes one edge between the hit
terminals whose weight is the inverse of mu times the walk's resistance.
Unbiasedness makes the expected walk Laplacian the exact Schur complement,
and diagonal dominance keeps walks short: each step leaves F with
probability at least alpha/(1+alpha).

Walk congestion is estimated beforehand by propagating expected visit mass;
nodes whose estimate exceeds gamma get promoted to terminals, which is what
keeps the minor distribution of the walk graph into the host from piling
onto a few super-nodes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graphs import ValidationError, WeightedGraph, laplacian
from .minors import MinorDistribution, compose_minors, minor_matvec, validate_minor
from .sparsify import restrict_distribution, spectral_sparsify

ALPHA_DEFAULT = 4.0
JACOBI_CONST = 2.0
WALK_MU_CONST = 4.0
WALK_CAP_CONST = 8.0
GAMMA_CONST = 1000.0
SHRINK_FACTOR = 49.0 / 50.0


# =============================================================================
# Strongly diagonally dominant subsets
# =============================================================================

@dataclass(frozen=True)
class DDSubset:
    nodes: tuple
    alpha: float
    slack: dict      # node -> deg - (1+alpha) * within-subset adjacency
    tries: int


def _within_adjacency(graph, members):
    inside = np.zeros(graph.n)
    mem = np.zeros(graph.n, dtype=bool)
    mem[list(members)] = True
    for (u, v, w) in graph.edges:
        if u == v:
            continue
        if mem[u] and mem[v]:
            inside[u] += w
            inside[v] += w
    return inside


def find_dd_subset(graph, alpha=ALPHA_DEFAULT, seed=0, max_tries=10):
    """Sample nodes at rate 1/(4(1+alpha)), drop any sampled node whose
    within-sample adjacency exceeds deg/(1+alpha).  Dropping nodes only
    shrinks the sums, so one filtering pass certifies the survivors.

    Retries until the subset is non-empty and meets the n/(8(1+alpha))
    size bound; if every try misses the bound the largest non-empty
    subset wins rather than none at all.
    """
    n = graph.n
    p = 1.0 / (4.0 * (1.0 + alpha))
    bound = n / (8.0 * (1.0 + alpha))
    best = ()
    best_slack = {}
    for t in range(1, max_tries + 1):
        rng = np.random.default_rng((seed, t))
        sampled = np.nonzero(rng.random(n) < p)[0].tolist()
        if not sampled:
            continue
        inside = _within_adjacency(graph, sampled)
        keep = [u for u in sampled
                if (1.0 + alpha) * inside[u] <= graph.weighted_degree(u)]
        if not keep:
            continue
        inside2 = _within_adjacency(graph, keep)
        slack = {u: graph.weighted_degree(u) - (1.0 + alpha) * inside2[u]
                 for u in keep}
        if any(s < -1e-9 for s in slack.values()):
            raise ValidationError("filtered subset lost dominance")
        if len(keep) > len(best):
            best = tuple(keep)
            best_slack = slack
        if len(keep) >= bound:
            return DDSubset(tuple(keep), alpha, slack, t)
    if best:
        return DDSubset(best, alpha, best_slack, max_tries)
    raise ValidationError(
        f"no diagonally dominant subset found in {max_tries} tries")


# =============================================================================
# Jacobi approximation of the F-block inverse
# =============================================================================

def jacobi_steps(eps, const=JACOBI_CONST):
    """Smallest odd t with t >= const * ln(1/eps); odd keeps the truncated
    series below the true block inverse."""
    t = max(1, math.ceil(const * math.log(1.0 / eps)))
    return t if t % 2 == 1 else t + 1


class JacobiOp:
    """Z = sum_{i<=t} (D^-1 A)^i D^-1 for the F-block, where D is the full
    weighted degree and A the within-F adjacency.  Requires alpha >= 4 and
    row-wise (1+alpha)-dominance, which bounds the iteration matrix norm
    by 1/(1+alpha)."""

    def __init__(self, graph, nodes, eps, alpha=ALPHA_DEFAULT):
        if alpha < 4.0:
            raise ValidationError(f"alpha={alpha} below the required 4")
        self.nodes = tuple(nodes)
        self.t = jacobi_steps(eps)
        pos = {u: i for i, u in enumerate(self.nodes)}
        k = len(self.nodes)
        self.diag = np.array([graph.weighted_degree(u) for u in self.nodes])
        rows, cols, vals = [], [], []
        inside = np.zeros(k)
        for (u, v, w) in graph.edges:
            if u == v or u not in pos or v not in pos:
                continue
            i, j = pos[u], pos[v]
            rows.extend((i, j))
            cols.extend((j, i))
            vals.extend((w, w))
            inside[i] += w
            inside[j] += w
        bad = np.nonzero((1.0 + alpha) * inside > self.diag + 1e-9)[0]
        if bad.size:
            raise ValidationError(
                f"nodes {[self.nodes[i] for i in bad[:4]]} are not "
                f"(1+{alpha})-dominated")
        self._rows = np.array(rows, dtype=int)
        self._cols = np.array(cols, dtype=int)
        self._vals = np.array(vals)

    def _amul(self, x):
        y = np.zeros_like(x)
        vals = self._vals if x.ndim == 1 else self._vals[:, None]
        np.add.at(y, self._rows, vals * x[self._cols])
        return y

    def apply(self, b):
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            return b.copy()
        diag = self.diag if b.ndim == 1 else self.diag[:, None]
        x = b / diag
        for _ in range(self.t):
            x = (b + self._amul(x)) / diag
        return x

    def matrix(self):
        k = len(self.nodes)
        if k == 0:
            return np.zeros((0, 0))
        return np.column_stack([self.apply(np.eye(k)[:, j]) for j in range(k)])


# =============================================================================
# Hitting walks, vectorized
# =============================================================================

def _sampling_tables(graph):
    """Flat per-node cumulative weight tables with a globally monotone
    offset so one searchsorted serves every walker at once."""
    adj = graph.adjacency()
    offs = np.zeros(graph.n + 1, dtype=int)
    seg_w, seg_nbr, seg_eid = [], [], []
    for u in range(graph.n):
        acc = 0.0
        for (v, w, eid) in adj[u]:
            acc += w
            seg_w.append(acc)
            seg_nbr.append(v)
            seg_eid.append(eid)
        offs[u + 1] = len(seg_w)
    gcum = np.array(seg_w)
    base = np.zeros(graph.n)
    wdeg = np.zeros(graph.n)
    total = 0.0
    for u in range(graph.n):
        lo, hi = offs[u], offs[u + 1]
        base[u] = total
        if hi > lo:
            wdeg[u] = float(gcum[hi - 1])
            gcum[lo:hi] += total
            total = gcum[hi - 1]
    return (offs, base, gcum, np.array(seg_nbr, dtype=int),
            np.array(seg_eid, dtype=int), wdeg)


@dataclass
class WalkBatch:
    starts: np.ndarray
    hits: np.ndarray
    resistance: np.ndarray
    last_eid: np.ndarray       # -1 for zero-length walks
    visit_walks: np.ndarray    # flattened (walk, node, edge) step records
    visit_nodes: np.ndarray
    visit_eids: np.ndarray
    restarts: int
    max_step_load: int         # peak walkers on one node in one step


def walk_cap(n, alpha=ALPHA_DEFAULT):
    return max(4, math.ceil(WALK_CAP_CONST * math.log(max(n, 2)) / alpha))


def simulate_hitting_walks(graph, terminal_mask, starts, seed=0, cap=None,
                           alpha=ALPHA_DEFAULT, max_restart_rounds=80):
    """Run one walk per entry of ``starts`` until it hits a terminal.

    Walks longer than the cap restart from scratch, which preserves the
    hitting distribution conditioned on staying under the cap and cannot
    stall when the non-terminal set is alpha-dominated.
    """
    n = graph.n
    tmask = np.asarray(terminal_mask, dtype=bool)
    if cap is None:
        cap = walk_cap(n, alpha)
    offs, base, gcum, seg_nbr, seg_eid, wdeg = _sampling_tables(graph)
    ew = np.array([e[2] for e in graph.edges], dtype=float)
    starts = np.asarray(starts, dtype=int)
    if np.any(~tmask[starts] & (wdeg[starts] <= 0)):
        raise ValidationError("isolated non-terminal node cannot walk")
    K = starts.size
    rng = np.random.default_rng(seed)
    hits = np.where(tmask[starts], starts, -1)
    res = np.zeros(K)
    last = np.full(K, -1, dtype=int)
    vis_w, vis_n, vis_e = [], [], []
    max_load = 0
    restarts = 0
    todo = np.nonzero(hits < 0)[0]
    for _round in range(max_restart_rounds):
        if todo.size == 0:
            break
        pos = starts[todo].copy()
        r_acc = np.zeros(todo.size)
        l_eid = np.full(todo.size, -1, dtype=int)
        steps_w, steps_n, steps_e = [], [], []
        alive = np.ones(todo.size, dtype=bool)
        for _s in range(cap):
            act = np.nonzero(alive)[0]
            if act.size == 0:
                break
            cur = pos[act]
            counts = np.bincount(cur, minlength=n)
            max_load = max(max_load, int(counts.max(initial=0)))
            q = base[cur] + rng.random(act.size) * wdeg[cur]
            idx = np.searchsorted(gcum, q, side="right")
            idx = np.clip(idx, offs[cur], offs[cur + 1] - 1)
            eid = seg_eid[idx]
            steps_w.append(todo[act])
            steps_n.append(cur)
            steps_e.append(eid)
            r_acc[act] += 1.0 / ew[eid]
            l_eid[act] = eid
            nxt = seg_nbr[idx]
            pos[act] = nxt
            alive[act] = ~tmask[nxt]
        finished = np.nonzero(~alive)[0]
        done_ids = todo[finished]
        hits[done_ids] = pos[finished]
        res[done_ids] = r_acc[finished]
        last[done_ids] = l_eid[finished]
        for sw, sn, se in zip(steps_w, steps_n, steps_e):
            sel = np.isin(sw, done_ids)
            vis_w.append(sw[sel])
            vis_n.append(sn[sel])
            vis_e.append(se[sel])
        todo = todo[alive]
        restarts += int(todo.size)
    if todo.size:
        raise ValidationError(
            f"{todo.size} walks failed to hit a terminal within "
            f"{max_restart_rounds} restart rounds")
    cat = (lambda xs: np.concatenate(xs) if xs
           else np.zeros(0, dtype=int))
    return WalkBatch(starts, hits, res, last, cat(vis_w), cat(vis_n),
                     cat(vis_e), restarts, max_load)


def estimate_walk_congestion(graph, terminal_mask, mu, steps=None,
                             alpha=ALPHA_DEFAULT):
    """Expected visit counts if every edge releases mu walkers from each
    endpoint: propagate mass through non-terminals, terminals absorb."""
    n = graph.n
    tmask = np.asarray(terminal_mask, dtype=bool)
    if steps is None:
        steps = walk_cap(n, alpha)
    mass = np.zeros(n)
    rows, cols, vals = [], [], []
    for (u, v, w) in graph.edges:
        if u == v:
            continue
        if not tmask[u]:
            mass[u] += mu
        if not tmask[v]:
            mass[v] += mu
        rows.extend((u, v))
        cols.extend((v, u))
        vals.extend((w, w))
    rows = np.array(rows, dtype=int)
    cols = np.array(cols, dtype=int)
    vals = np.array(vals, dtype=float)
    wdeg = np.zeros(n)
    if vals.size:
        np.add.at(wdeg, rows, vals)
    visits = mass.copy()
    for _ in range(steps):
        out = np.where(tmask, 0.0, mass)
        scaled = np.where(wdeg > 0, out / np.maximum(wdeg, 1e-300), 0.0)
        nxt = np.zeros(n)
        if vals.size:
            np.add.at(nxt, rows, vals * scaled[cols])
        mass = nxt
        visits += np.where(tmask, 0.0, mass)
    return visits


# =============================================================================
# Walk Schur complement with its minor distribution
# =============================================================================

@dataclass
class RandWalkResult:
    h: WeightedGraph                      # on terminals, nodes 0..|T_hat|-1
    t_hat: tuple                          # node ids of the input graph
    dist: MinorDistribution | None        # h into the host, when given one
    ledger: dict = field(default_factory=dict)


def default_gamma(n, eps, alpha=ALPHA_DEFAULT, scale=1.0):
    logn = math.log(max(n, 2))
    return GAMMA_CONST * (logn ** 8) / (alpha * eps ** 4) * scale


def _respan_local(graph, nodes, edge_ids, root):
    """BFS spanning tree of ``nodes`` using only the collected edges;
    edges leaving the node set are ignored."""
    adj = {}
    for eid in set(edge_ids):
        a, b, _w = graph.edges[eid]
        if a == b or a not in nodes or b not in nodes:
            continue
        adj.setdefault(a, []).append((b, eid))
        adj.setdefault(b, []).append((a, eid))
    seen = {root}
    tree = []
    q = deque([root])
    while q:
        x = q.popleft()
        for (y, eid) in sorted(adj.get(x, ())):
            if y not in seen:
                seen.add(y)
                tree.append(eid)
                q.append(y)
    if seen != set(nodes):
        raise ValidationError("walk edges do not connect the super-node")
    return tuple(tree)


def randwalk_schur(graph, terminals, eps, *, dist=None, seed=0,
                   alpha=ALPHA_DEFAULT, gamma=None, gamma_scale=1.0,
                   mu_boost=1.0, mu_cap=None, service=None):
    """Approximate SC(graph, T) by hitting-walk edges.

    gamma rules the congestion augmentation: estimated visit counts above
    it promote a node to terminal before any walk runs (gamma=0 promotes
    every non-terminal, gamma=inf none).
    """
    n = graph.n
    if eps <= 0:
        raise ValidationError("eps must be positive")
    tset = set(int(t) for t in terminals)
    if not tset:
        raise ValidationError("terminal set is empty")
    logn = math.log(max(n, 2))
    mu = max(1, math.ceil(WALK_MU_CONST * logn / (eps * eps) * mu_boost))
    if mu_cap is not None:
        mu = min(mu, int(mu_cap))
    if gamma is None:
        gamma = default_gamma(n, eps, alpha, gamma_scale)
    tmask = np.zeros(n, dtype=bool)
    tmask[list(tset)] = True
    est = estimate_walk_congestion(graph, tmask, mu, alpha=alpha)
    if math.isinf(gamma):
        augmented = []
    else:
        augmented = sorted(int(x) for x in
                           np.nonzero((est > gamma) & ~tmask)[0])
    tmask[augmented] = True
    t_hat = tuple(sorted(int(x) for x in np.nonzero(tmask)[0]))
    rank = {u: i for i, u in enumerate(t_hat)}

    exact_edges = []      # both endpoints terminal: kept at full weight
    walk_eids = []
    for eid, (u, v, w) in enumerate(graph.edges):
        if u == v:
            continue
        if tmask[u] and tmask[v]:
            exact_edges.append((rank[u], rank[v], w, eid))
        else:
            walk_eids.append(eid)

    h_edges = [(a, b, w) for (a, b, w, _e) in exact_edges]
    images = [("edge", e) for (_a, _b, _w, e) in exact_edges]
    owner_members = {t: {t} for t in t_hat}
    owner_pool = {t: [] for t in t_hat}
    restarts = 0
    max_load = 0
    loops = 0
    if walk_eids:
        E = len(walk_eids)
        us = np.array([graph.edges[e][0] for e in walk_eids], dtype=int)
        vs = np.array([graph.edges[e][1] for e in walk_eids], dtype=int)
        ws = np.array([graph.edges[e][2] for e in walk_eids], dtype=float)
        starts = np.concatenate([np.repeat(us, mu), np.repeat(vs, mu)])
        batch = simulate_hitting_walks(graph, tmask, starts,
                                       seed=seed, alpha=alpha)
        restarts = batch.restarts
        max_load = batch.max_step_load
        P = E * mu
        ue = np.arange(P)
        ve = ue + P
        eid_rep = np.repeat(np.array(walk_eids, dtype=int), mu)
        t1 = batch.hits[ue]
        t2 = batch.hits[ve]
        R = (batch.resistance[ue] + batch.resistance[ve]
             + np.repeat(1.0 / ws, mu))
        wgt = 1.0 / (mu * R)
        img = np.where(batch.last_eid[ve] >= 0, batch.last_eid[ve], eid_rep)
        keep = t1 != t2
        loops = int(np.count_nonzero(~keep))
        kept_idx = np.nonzero(keep)[0]
        lo = np.minimum(t1[kept_idx], t2[kept_idx]).astype(np.int64)
        hi = np.maximum(t1[kept_idx], t2[kept_idx]).astype(np.int64)
        uniq, inv = np.unique(lo * n + hi, return_inverse=True)
        sums = np.bincount(inv, weights=wgt[kept_idx])
        first = np.full(uniq.size, -1, dtype=int)
        first[inv[::-1]] = kept_idx[::-1]
        for gi in range(uniq.size):
            a = int(uniq[gi] // n)
            b = int(uniq[gi] % n)
            h_edges.append((rank[a], rank[b], float(sums[gi])))
            images.append(("edge", int(img[first[gi]])))
        # minor bookkeeping: both half-walks of a pair live in t1's
        # super-node; dedup (owner, node) and (owner, edge) pairs before
        # the python loops
        walk_owner = np.empty(2 * P, dtype=np.int64)
        walk_owner[ue] = t1
        walk_owner[ve] = t1
        ow = walk_owner[batch.visit_walks]
        for key in np.unique(ow * n + batch.visit_nodes):
            owner_members[int(key // n)].add(int(key % n))
        m_tot = len(graph.edges)
        for key in np.unique(ow * m_tot + batch.visit_eids):
            owner_pool[int(key // m_tot)].append(int(key % m_tot))
        # the original edge bridges the two half-walks inside the
        # super-node; edges whose far side is a terminal get filtered by
        # the respan
        for key in np.unique(t1.astype(np.int64) * m_tot + eid_rep):
            owner_pool[int(key // m_tot)].append(int(key % m_tot))

    labels = tuple(graph.label_of(t) for t in t_hat)
    h = WeightedGraph(len(t_hat), h_edges, labels=labels)
    out_dist = None
    rho = None
    rounds = 0
    if dist is not None:
        supers, leaders, trees = [], [], []
        for t in t_hat:
            mem = owner_members[t]
            supers.append(frozenset(mem))
            leaders.append(t)
            trees.append(_respan_local(graph, mem, owner_pool[t], t))
        inner = MinorDistribution(h, graph, tuple(supers), tuple(leaders),
                                  tuple(trees), tuple(images))
        validate_minor(inner)
        out_dist = compose_minors(inner, dist)
        rho = validate_minor(out_dist).rho
        if service is not None:
            _y, q = minor_matvec(dist, np.zeros(graph.n), service=service)
            est_steps = walk_cap(n, alpha)
            per_phase = 1 if math.isinf(gamma) else \
                max(1, math.ceil(max_load / max(gamma, 1.0)))
            rounds = q * est_steps * (1 + per_phase)
    ledger = {"mu": mu, "restarts": restarts, "walk_edges": len(walk_eids),
              "exact_edges": len(exact_edges), "loops": loops,
              "gamma": gamma, "augmented": len(augmented),
              "max_step_load": max_load, "rounds": rounds, "rho": rho}
    return RandWalkResult(h, t_hat, out_dist, ledger)


# =============================================================================
# The elimination loop
# =============================================================================

@dataclass
class EliminateRound:
    f_idx: np.ndarray        # positions of eliminated nodes (previous space)
    t_idx: np.ndarray        # positions of kept nodes (previous space)
    jacobi: JacobiOp
    cross_t: np.ndarray      # T-F edges as (t position, f position, weight)
    cross_f: np.ndarray
    cross_w: np.ndarray
    sizes: tuple             # (n before, |F|, |T_hat|, augmented)
    audit: tuple | None = None


@dataclass
class EliminateResult:
    rounds_data: list
    graphs: list             # M^0 .. M^d
    dists: list              # matching minor distributions into the host
    terminals: tuple         # node ids of the final graph
    ledger: dict

    @property
    def depth(self):
        return len(self.rounds_data)

    def apply(self, b, tail_fn, service=None):
        """Run b through the recorded factorization; tail_fn receives
        vectors on the final terminal space and should apply an
        (approximate) pseudo-inverse of the final Laplacian."""
        return self._apply(0, np.asarray(b, dtype=float), tail_fn, service)

    def _apply(self, r, b, tail_fn, service):
        if r == len(self.rounds_data):
            return tail_fn(b)
        rd = self.rounds_data[r]
        bF = b[rd.f_idx]
        bT = b[rd.t_idx]
        cF = rd.jacobi.apply(bF)
        uT = self._apply(r + 1, bT - self._ltf(rd, cF), tail_fn, service)
        uF = rd.jacobi.apply(bF - self._lft(rd, uT))
        out = np.zeros_like(b)
        out[rd.f_idx] = uF
        out[rd.t_idx] = uT
        if service is not None and self.dists[r] is not None:
            _y, q = minor_matvec(self.dists[r], np.zeros(self.graphs[r].n),
                                 service=service)
            self.ledger["apply_rounds"] = (self.ledger.get("apply_rounds", 0)
                                           + q * (2 * rd.jacobi.t + 2))
        return out

    @staticmethod
    def _ltf(rd, xF):
        y = np.zeros((rd.t_idx.size,) + xF.shape[1:])
        if rd.cross_w.size:
            w = rd.cross_w if xF.ndim == 1 else rd.cross_w[:, None]
            np.add.at(y, rd.cross_t, w * xF[rd.cross_f])
        return -y

    @staticmethod
    def _lft(rd, xT):
        y = np.zeros((rd.f_idx.size,) + xT.shape[1:])
        if rd.cross_w.size:
            w = rd.cross_w if xT.ndim == 1 else rd.cross_w[:, None]
            np.add.at(y, rd.cross_f, w * xT[rd.cross_t])
        return -y

    def materialize(self, tail_matrix):
        n0 = self.graphs[0].n
        tail = np.asarray(tail_matrix, dtype=float)
        eye = np.eye(n0)
        return np.column_stack(
            [self.apply(eye[:, j], lambda y: tail @ y) for j in range(n0)])


def eliminate(graph, d, eps, *, dist=None, seed=0, alpha=ALPHA_DEFAULT,
              gamma=None, gamma_scale=1.0, mu_cap=None, service=None,
              sparsify_engine="oracle", audit=False, enforce_shrink=True):
    """d rounds of DD-subset elimination on an eps/6-sparsified input.

    Internal budgets: the sparsifier and the Jacobi series run at eps/6
    and the walk Schur complement at eps/2, so one round costs at most a
    (1+eps) factor and the composite operator approximates the input
    pseudo-inverse within (1 +/- eps)^d.
    """
    if eps <= 0 or eps > 1.0:
        raise ValidationError("eps must be in (0, 1]")
    eps_parts = eps / 6.0
    eps_walk = eps / 2.0
    spars = spectral_sparsify(graph, eps_parts, engine=sparsify_engine,
                              seed=seed, dist=dist, service=service,
                              audit=audit)
    rounds_total = spars.rounds
    graphs_seq = [spars.graph]
    dists_seq = [restrict_distribution(dist, spars) if dist is not None
                 else None]
    rounds_data = []
    ledger = {"sparsifier_escalations": spars.escalations, "per_round": []}
    for r in range(1, d + 1):
        cur = graphs_seq[-1]
        cur_dist = dists_seq[-1]
        if cur.n <= 2:
            break
        dd = find_dd_subset(cur, alpha=alpha, seed=seed * 397 + r)
        tnodes = sorted(set(range(cur.n)) - set(dd.nodes))
        walk = randwalk_schur(cur, tnodes, eps_walk, dist=cur_dist,
                              seed=seed * 1009 + r, alpha=alpha, gamma=gamma,
                              gamma_scale=gamma_scale, mu_cap=mu_cap,
                              service=service)
        rounds_total += walk.ledger["rounds"]
        t_hat = walk.t_hat
        f_eff = sorted(set(range(cur.n)) - set(t_hat))
        if not f_eff:
            ledger["per_round"].append({"n": cur.n, "skipped": True,
                                        **walk.ledger})
            continue
        jac = JacobiOp(cur, f_eff, eps_parts, alpha=alpha)
        if enforce_shrink and cur.n >= 50 and \
                len(t_hat) > SHRINK_FACTOR * cur.n + 1e-9:
            raise ValidationError(
                f"round {r}: kept {len(t_hat)} of {cur.n} nodes, over the "
                f"{SHRINK_FACTOR} shrink factor")
        fpos = {u: i for i, u in enumerate(f_eff)}
        tpos = {u: i for i, u in enumerate(t_hat)}
        ct, cf, cw = [], [], []
        for (u, v, w) in cur.edges:
            if u == v:
                continue
            if u in fpos and v in tpos:
                cf.append(fpos[u])
                ct.append(tpos[v])
                cw.append(w)
            elif v in fpos and u in tpos:
                cf.append(fpos[v])
                ct.append(tpos[u])
                cw.append(w)
        spars_r = spectral_sparsify(walk.h, eps_parts,
                                    engine=sparsify_engine,
                                    seed=seed * 31 + r, dist=walk.dist,
                                    service=service, audit=audit)
        rounds_total += spars_r.rounds
        audit_data = None
        if audit:
            audit_data = _audit_round(cur, f_eff, t_hat, jac, walk.h,
                                      spars_r.graph)
        rounds_data.append(EliminateRound(
            np.array(f_eff, dtype=int), np.array(t_hat, dtype=int), jac,
            np.array(ct, dtype=int), np.array(cf, dtype=int),
            np.array(cw, dtype=float),
            (cur.n, len(f_eff), len(t_hat), walk.ledger["augmented"]),
            audit_data))
        graphs_seq.append(spars_r.graph)
        dists_seq.append(restrict_distribution(walk.dist, spars_r)
                         if walk.dist is not None else None)
        ledger["per_round"].append(
            {"n": cur.n, "F": len(f_eff), "T_hat": len(t_hat),
             **walk.ledger})
    ledger["rounds"] = rounds_total
    ledger["depth"] = len(rounds_data)
    final = graphs_seq[-1]
    return EliminateResult(rounds_data, graphs_seq, dists_seq,
                           tuple(range(final.n)), ledger)


def _audit_round(cur, f_eff, t_hat, jac, h_walk, h_spars):
    """Dense per-round quality: the round operator with the exact Schur
    complement tail against pinv(L), and the walk graph against the true
    Schur complement."""
    from .oracle import generalized_eig_range, schur_complement
    L = laplacian(cur)
    sc = schur_complement(L, list(t_hat))
    scp = np.linalg.pinv(sc)
    Z = jac.matrix()
    nt = len(t_hat)
    nf = len(f_eff)
    fpos = {u: i for i, u in enumerate(f_eff)}
    tpos = {u: i for i, u in enumerate(t_hat)}
    LTF = np.zeros((nt, nf))
    for (u, v, w) in cur.edges:
        if u == v:
            continue
        if u in fpos and v in tpos:
            LTF[tpos[v], fpos[u]] -= w
        elif v in fpos and u in tpos:
            LTF[tpos[u], fpos[v]] -= w
    idx_f = np.array(f_eff, dtype=int)
    idx_t = np.array(t_hat, dtype=int)
    W = np.zeros((cur.n, cur.n))
    for j in range(cur.n):
        b = np.zeros(cur.n)
        b[j] = 1.0
        bF, bT = b[idx_f], b[idx_t]
        cF = Z @ bF
        uT = scp @ (bT - LTF @ cF)
        uF = Z @ (bF - LTF.T @ uT)
        W[idx_f, j] = uF
        W[idx_t, j] = uT
    Pi = np.eye(cur.n) - np.ones((cur.n, cur.n)) / cur.n
    op_range = generalized_eig_range(np.linalg.pinv(L), Pi @ W @ Pi)
    walk_range = generalized_eig_range(sc, laplacian(h_walk))
    spars_range = generalized_eig_range(laplacian(h_walk),
                                        laplacian(h_spars))
    return (op_range, walk_range, spars_range)
