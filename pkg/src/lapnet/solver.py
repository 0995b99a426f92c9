"""Laplacian solver: a preconditioner chain driven by a Chebyshev loop.

The chain starts with a spectral sparsifier and an ultra-sparsifier whose
degree-1/2 elimination maps the problem onto a core graph, then stacks
elimination links (diagonally dominant subsets, Jacobi block inverses,
walk Schur complements) until the remainder is small enough for a dense
pseudo-inverse tail.  Applying the chain to a vector costs a handful of
sweeps per link, so it serves as the preconditioner W in a classical
Chebyshev iteration on L x = b.

Everything here is measured, not assumed: after building a chain the
solver materializes W once, computes the exact generalized eigenvalue
range of W L on the complement of the all-ones kernel, and runs the
iteration with those bounds.  The stopping rule is rigorous for the same
reason: r' W r / lmin upper-bounds the squared L-norm error and
b' W b / lmax lower-bounds the squared L-norm of b, so the loop only
stops when the requested relative error provably holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationService
from .elimination import eliminate
from .graphs import ValidationError, laplacian
from .minors import identity_minor, minor_matvec
from .sparsify import restrict_distribution, spectral_sparsify
from .ultrasparsify import ultrasparsify

DESK_K = 8.0
DESK_DEPTH = 2
DESK_MAX_LINKS = 3
DESK_MU_CAP = 64
TAIL_CUTOFF = 24
CHAIN_EPS_CONST = 2.0


def desk_chain_eps(n, const=CHAIN_EPS_CONST):
    """min(0.05, 1/(C ceil(log n))): small enough that per-link losses stay
    negligible against the ultra-sparsifier's condition bound."""
    return min(0.05, 1.0 / (const * math.ceil(math.log(max(n, 2)))))


# =============================================================================
# Chain links
# =============================================================================

@dataclass
class UltraLink:
    """Sparsify + ultra-sparsify + partial Cholesky: maps vectors on the
    input graph to vectors on the elimination core and back."""
    ops: object                  # PartialCholesky on the ultra-sparsifier
    core_graph: object
    dist: object                 # core as a minor of the host, or None
    sweeps: int
    build_rounds: int
    ledger: dict = field(default_factory=dict)

    def apply(self, b, tail_fn, service=None):
        out = self.ops.apply_pinv(b, tail_fn)
        if service is not None and self.dist is not None:
            _y, q = minor_matvec(self.dist, np.zeros(self.dist.minor.n),
                                 service=service)
            self.ledger["apply_rounds"] = (self.ledger.get("apply_rounds", 0)
                                           + q * (2 * self.sweeps + 2))
        return out


@dataclass
class ElimLink:
    elim: object                 # EliminateResult
    build_rounds: int
    ledger: dict = field(default_factory=dict)

    @property
    def core_graph(self):
        return self.elim.graphs[-1]

    def apply(self, b, tail_fn, service=None):
        return self.elim.apply(b, tail_fn, service=service)


@dataclass
class Chain:
    graph: object
    links: list
    tail_graph: object
    tail_pinv: np.ndarray
    ledger: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return [self.graph.n] + [lk.core_graph.n for lk in self.links]

    def apply(self, b, service=None):
        """W b through every link; accepts a vector or a matrix of
        columns."""
        return self._apply(0, np.asarray(b, dtype=float), service)

    def _apply(self, i, b, service):
        if i == len(self.links):
            return self.tail_pinv @ b
        nxt = lambda y: self._apply(i + 1, y, service)
        return self.links[i].apply(b, nxt, service=service)

    def materialize(self):
        return self.apply(np.eye(self.graph.n))

    def apply_rounds(self, service):
        """Service-charged cost of one application, in rounds.  The
        aggregation schedules are cached, so every later application costs
        the same."""
        before = service.total_rounds
        self.apply(np.zeros(self.graph.n), service=service)
        return service.total_rounds - before


def build_chain(graph, *, k=DESK_K, d=DESK_DEPTH, chain_eps=None,
                max_links=DESK_MAX_LINKS, tail_cutoff=TAIL_CUTOFF, seed=0,
                mu_cap=DESK_MU_CAP, dist=None, service=None,
                sparsify_engine="oracle", audit=False):
    """Assemble the preconditioner chain for a connected graph.

    Link 1 sparsifies at chain_eps/3 and ultra-sparsifies with parameter k;
    later links run depth-d eliminations at chain_eps.  A graph of at most
    k nodes gets an empty chain, i.e. just the dense tail.  The chain
    stops at max_links, when the core dips under tail_cutoff nodes, or
    when a link stops shrinking; whatever remains is inverted densely.
    Desk-sized cores shrink slowly (each elimination round keeps 49/50 of
    the nodes), so the dense tail is doing real work here and the ledger
    says so.
    """
    if not graph.is_connected():
        raise ValidationError("solver needs a connected graph")
    if chain_eps is None:
        chain_eps = desk_chain_eps(graph.n)
    if dist is None and service is not None:
        dist = identity_minor(graph)
    ledger = {"k": k, "d": d, "chain_eps": chain_eps, "links": []}
    if graph.n <= max(k, 2):
        ledger.update(tail_n=graph.n, build_rounds=0)
        return Chain(graph, [], graph, np.linalg.pinv(laplacian(graph)),
                     ledger)
    links = []
    sp = spectral_sparsify(graph, chain_eps / 3.0, engine=sparsify_engine,
                           seed=seed, dist=dist, service=service)
    sp_dist = restrict_distribution(dist, sp) if dist is not None else None
    us = ultrasparsify(sp.graph, k, seed=seed + 1, dist=sp_dist,
                       service=service)
    links.append(UltraLink(us.ops, us.core_graph, us.dist_host,
                           us.extras["sweeps"], sp.rounds + us.rounds))
    ledger["links"].append({"kind": "ultra", "n": graph.n,
                            "m_sparse": sp.graph.m, "m_ultra": us.h.m,
                            "core_n": us.core_graph.n,
                            "total_stretch": us.extras["total_stretch"],
                            "rounds": sp.rounds + us.rounds})
    cur_graph, cur_dist = us.core_graph, us.dist_host
    rng = np.random.default_rng(seed)
    while (len(links) < max_links and cur_graph.n > tail_cutoff):
        el = eliminate(cur_graph, d, chain_eps, dist=cur_dist,
                       seed=int(rng.integers(1 << 30)), mu_cap=mu_cap,
                       service=service, sparsify_engine=sparsify_engine,
                       enforce_shrink=False)
        links.append(ElimLink(el, el.ledger.get("rounds", 0)))
        ledger["links"].append({"kind": "eliminate", "n": cur_graph.n,
                                "core_n": el.graphs[-1].n,
                                "rounds": el.ledger.get("rounds", 0)})
        nxt_graph, nxt_dist = el.graphs[-1], el.dists[-1]
        if nxt_graph.n >= cur_graph.n:
            cur_graph, cur_dist = nxt_graph, nxt_dist
            break
        cur_graph, cur_dist = nxt_graph, nxt_dist
    tail_pinv = np.linalg.pinv(laplacian(cur_graph))
    ledger["tail_n"] = cur_graph.n
    ledger["build_rounds"] = sum(lk.build_rounds for lk in links)
    chain = Chain(graph, links, cur_graph, tail_pinv, ledger)
    if audit:
        ledger["sizes"] = chain.sizes
    return chain


# =============================================================================
# Preconditioned Chebyshev
# =============================================================================

def _pencil_range(W, L):
    """Eigenvalue range of W L restricted to the complement of ker L,
    via the symmetric congruence W^(1/2) L W^(1/2)."""
    n = L.shape[0]
    P = np.eye(n) - 1.0 / n
    Wp = P @ W @ P
    Wp = (Wp + Wp.T) / 2.0
    s, U = np.linalg.eigh(Wp)
    Wh = U * np.sqrt(np.clip(s, 0.0, None))
    A = Wh.T @ L @ Wh
    ev = np.linalg.eigvalsh((A + A.T) / 2.0)
    pos = ev[ev > max(ev.max(), 0.0) * 1e-10]
    if pos.size == 0:
        raise ValidationError("preconditioner lost the whole spectrum")
    return float(pos.min()), float(pos.max()), Wp


def predicted_iterations(kappa, eps):
    return math.ceil(math.sqrt(max(kappa, 1.0)) * math.log(2.0 / eps)) + 1


def chebyshev_solve(l_apply, w_apply, b, eps, eig_range, *, budget_factor=4):
    """Chebyshev iteration for L x = b preconditioned by W.

    eig_range bounds the spectrum of W L away from the kernel.  Stops when
    r' W r / lmin <= eps^2 b' L b, which certifies the error bound
    ||x - L^+ b||_L <= eps ||b||_L: the error norm squared is r' L^+ r,
    and W/lmin dominates L^+ on the range.  Gives up after budget_factor
    times the sqrt(kappa) log(2/eps) estimate.
    """
    lmin, lmax = eig_range
    if lmin <= 0:
        raise ValidationError("preconditioned spectrum must be positive")
    budget = budget_factor * predicted_iterations(lmax / lmin, eps)
    theta = (lmax + lmin) / 2.0
    delta = (lmax - lmin) / 2.0
    sigma = theta / delta if delta > 0 else math.inf
    x = np.zeros_like(b)
    r = b.copy()
    z = w_apply(r)
    goal = eps * eps * float(b @ l_apply(b))
    it = 0
    converged = float(r @ z) / lmin <= goal
    dvec = z / theta
    rho = 1.0 / sigma
    while not converged and it < budget:
        it += 1
        x = x + dvec
        r = r - l_apply(dvec)
        z = w_apply(r)
        if float(r @ z) / lmin <= goal:
            converged = True
            break
        if math.isinf(sigma):
            dvec = z / theta
            continue
        rho_next = 1.0 / (2.0 * sigma - rho)
        dvec = rho_next * rho * dvec + (2.0 * rho_next / delta) * z
        rho = rho_next
    info = {"stop_metric": float(r @ z) / lmin, "stop_goal": goal,
            "budget": budget}
    return x, it, converged, info


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    predicted: int
    eig_range: tuple
    converged: bool
    rounds: int
    ledger: dict = field(default_factory=dict)


def solve_laplacian(graph, b, eps, *, model=None, seed=0, k=DESK_K,
                    d=DESK_DEPTH, chain_eps=None,
                    max_links=DESK_MAX_LINKS, mu_cap=DESK_MU_CAP,
                    service=None, chain=None, sparsify_engine="oracle",
                    max_rounds=None, budget_factor=4):
    """Solve L x = b to relative L-norm error eps.

    b is projected onto the complement of the all-ones kernel first; the
    discarded component is reported in the ledger.  With a model name or a
    service the network cost is charged per iteration: one Laplacian
    matvec plus one chain application, both through the aggregation
    layer.  The numeric loop itself uses the materialized preconditioner,
    which is the same linear map, so iterate values and round charges
    agree with an operator-form run.
    """
    if eps <= 0 or eps >= 1:
        raise ValidationError("eps must be in (0, 1)")
    b = np.asarray(b, dtype=float)
    if b.shape != (graph.n,):
        raise ValidationError(f"b must have shape ({graph.n},)")
    if not np.all(np.isfinite(b)):
        raise ValidationError("b has non-finite entries")
    if service is None and model is not None:
        service = AggregationService(model, seed=seed,
                                     max_rounds=max_rounds or 1_000_000)
    shift = float(b.mean())
    b0 = b - shift
    bnorm = float(np.linalg.norm(b0))
    if bnorm == 0.0:
        return SolveResult(np.zeros(graph.n), 0, 0, (0.0, 0.0), True, 0,
                           {"kernel_component": shift})
    if chain is None:
        chain = build_chain(graph, k=k, d=d, chain_eps=chain_eps,
                            max_links=max_links, seed=seed, mu_cap=mu_cap,
                            service=service, sparsify_engine=sparsify_engine)
    L = laplacian(graph)
    W = chain.materialize()
    lmin, lmax, Wp = _pencil_range(W, L)
    kappa = lmax / lmin
    pred = predicted_iterations(kappa, eps)
    per_iter_rounds = 0
    r_l = 0
    if service is not None:
        r_w = chain.apply_rounds(service)
        _y, r_l = minor_matvec(identity_minor(graph), np.zeros(graph.n),
                               service=service)
        per_iter_rounds = r_w + r_l
    x, it, converged, info = chebyshev_solve(
        lambda v: L @ v, lambda v: Wp @ v, b0, eps, (lmin, lmax),
        budget_factor=budget_factor)
    x = x - x.mean()
    # one extra matvec at setup prices the b' L b stop goal
    rounds = (chain.ledger.get("build_rounds", 0) + r_l
              + it * per_iter_rounds)
    ledger = {"kappa": kappa, "kernel_component": shift,
              "per_iter_rounds": per_iter_rounds,
              "chain_sizes": chain.sizes, **info}
    return SolveResult(x, it, pred, (lmin, lmax), converged, rounds, ledger)


def asymptotic_parameters(n, eps, alpha=4.0):
    """The parameter schedule the desk defaults stand in for, evaluated at
    (n, eps).  Desk runs truncate the chain and cap the walk counts; these
    are the untruncated growth rates."""
    ln = math.log(max(n, 2))
    return {
        "k": ("ceil(log2(n)^2)", math.ceil(math.log2(max(n, 2)) ** 2)),
        "d": ("ceil(log2(log2(n)))",
              max(1, math.ceil(math.log2(max(math.log2(max(n, 2)), 2))))),
        "chain_eps": ("1/log2(n)", 1.0 / max(math.log2(max(n, 2)), 1.0)),
        "mu": ("ceil(4 ln(n)/eps^2)", math.ceil(4.0 * ln / (eps * eps))),
        "walk_cap": ("ceil(8 ln(n)/alpha)", math.ceil(8.0 * ln / alpha)),
        "gamma": ("1000 ln(n)^8/(alpha eps^4)",
                  1000.0 * ln ** 8 / (alpha * eps ** 4)),
        "links": ("until the core is O(1); desk runs cut at max_links "
                  "and finish densely", None),
    }
