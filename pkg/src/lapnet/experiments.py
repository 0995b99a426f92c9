"""Config-driven sweeps over (family, size, model, params, seed) grids.

A config is a JSON object:

    {
      "name":     "congest-ktree-solve",
      "module":   "solve",            # aggregation | ultrasparsify |
                                      # eliminate | approxsc | solve
      "models":   ["congest"],        # sequential | congest | ncc | hybrid
      "families": [{"family": "ktree", "k": 2}],
      "sizes":    [32, 48, 64],
      "seeds":    [0, 1, 2],
      "params":   {"eps": [0.01, 0.001]}
    }

List-valued entries in "params" are expanded as a grid; everything else is
passed to the module verbatim.  Cells run in a deterministic sorted order
and the emitted CSV is byte-stable for a fixed build, so reruns can be
diffed directly.  One row per cell with the fixed column set; rounds_local
is the module's own accounting for the operation under test, rounds_global
is the service total including construction, and the message columns split
by channel (edge traffic vs global traffic).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os

import numpy as np

from .aggregation import AggregationService
from .approxsc import approx_sc, make_oracle_solver
from .elimination import eliminate
from .generators import generate_graph
from .graphs import hop_diameter, laplacian
from .minors import contract_edges, identity_minor
from .oracle import generalized_eig_range
from .solver import solve_laplacian
from .ultrasparsify import ultrasparsify

CSV_COLUMNS = ("family", "n", "m", "D", "tw", "model", "module",
               "params-json", "seed", "rounds_local", "rounds_global",
               "msgs_local", "msgs_global", "error_vs_oracle", "status")

ORACLE_CAP = 200        # densest size we still check against the oracle


def _expand_params(params):
    """Cartesian product over the list-valued entries, sorted for
    determinism."""
    params = params or {}
    keys = sorted(params)
    pools = [params[k] if isinstance(params[k], list) else [params[k]]
             for k in keys]
    for combo in itertools.product(*pools):
        yield dict(zip(keys, combo))


def config_cells(config):
    cells = []
    for fam, n, model, p, seed in itertools.product(
            config["families"], config["sizes"],
            config.get("models", ["sequential"]),
            list(_expand_params(config.get("params"))),
            config.get("seeds", [0])):
        cells.append({"family": dict(fam), "n": int(n), "model": model,
                      "module": config["module"], "params": p,
                      "seed": int(seed)})
    cells.sort(key=lambda c: json.dumps(c, sort_keys=True))
    return cells


def _contraction_distribution(graph, parts, seed):
    """A minor with about `parts` super-nodes, grown by contracting random
    spanning-tree edges; contraction keeps every super-node connected."""
    from .graphs import bfs_tree
    _parent, tree_eids = bfs_tree(graph, 0)
    rng = np.random.default_rng(seed)
    eids = sorted(tree_eids)
    rng.shuffle(eids)
    want = max(0, graph.n - max(2, parts))
    dist, _nmap = contract_edges(identity_minor(graph), eids[:want])
    return dist


def _sandwich_error(rng_pair, lo_bound, hi_bound):
    lo, hi = rng_pair
    return max(0.0, lo_bound - lo, hi - hi_bound)


def composite_vs_pinv(graph, res, tail):
    """Materialize the elimination composite and project out the all-ones
    kernel so its pencil against the dense pseudo-inverse is well posed."""
    comp = res.materialize(tail)
    P = np.eye(graph.n) - 1.0 / graph.n
    comp = P @ comp @ P
    return (comp + comp.T) / 2.0


def run_cell(cell):
    """One measurement row.  Failures land in the status column with a
    stage tag instead of aborting the sweep."""
    fam = dict(cell["family"])
    family = fam.pop("family")
    label = family if not fam else family + ":" + ",".join(
        f"{k}={fam[k]}" for k in sorted(fam))
    params = dict(cell.get("params") or {})
    seed = cell["seed"]
    model = cell["model"]
    row = {c: "" for c in CSV_COLUMNS}
    row.update(family=label, model=model, module=cell["module"], seed=seed,
               **{"params-json": json.dumps(params, sort_keys=True)})
    stage = "generate"
    try:
        graph, dec = generate_graph(family, cell["n"], seed=seed, **fam)
        row["n"], row["m"] = graph.n, graph.m
        row["D"] = hop_diameter(graph)
        row["tw"] = dec.width if dec is not None else ""
        service = AggregationService(model, seed=seed)
        stage = cell["module"]
        fn = _MODULE_RUNNERS[cell["module"]]
        local, total, error = fn(graph, dec, params, seed, service)
        row["rounds_local"] = local
        row["rounds_global"] = (service.total_rounds if total is None
                                else total)
        row["msgs_local"] = service.total_msgs_local
        row["msgs_global"] = service.total_msgs_global
        row["error_vs_oracle"] = ("" if error is None
                                  else f"{float(error):.6g}")
        row["status"] = "ok"
    except Exception as exc:    # noqa: BLE001 - sweeps must survive cells
        row["status"] = f"error:{stage}:{type(exc).__name__}"
    return row


def _run_aggregation(graph, dec, params, seed, service):
    dist = _contraction_distribution(graph, int(params.get("parts", 8)),
                                     seed)
    op = params.get("op", "sum")
    contributions = {u: {x: float((x * 31 + 7) % 23)
                         for x in dist.super_nodes[u]}
                     for u in range(dist.minor.n)}
    call = service.aggregate(dist, contributions, op=op)
    # the service cross-checks every simulated call against the
    # sequential fold, so surviving it means error zero
    return call.rounds, None, 0.0


def _run_ultrasparsify(graph, dec, params, seed, service):
    k = float(params.get("k", 8))
    us = ultrasparsify(graph, k, seed=seed, dist=identity_minor(graph),
                       service=service)
    error = None
    if graph.n <= ORACLE_CAP:
        pair = generalized_eig_range(laplacian(graph), laplacian(us.h))
        error = _sandwich_error(pair, 1.0 - 1e-9, 2.0 * k)
    return us.rounds, None, error


def _run_eliminate(graph, dec, params, seed, service):
    d = int(params.get("d", 2))
    eps = float(params.get("eps", 0.5))
    res = eliminate(graph, d, eps, dist=identity_minor(graph), seed=seed,
                    mu_cap=int(params.get("mu_cap", 64)), service=service,
                    enforce_shrink=False)
    error = None
    if graph.n <= 120:
        tail = np.linalg.pinv(laplacian(res.graphs[-1]))
        comp = composite_vs_pinv(graph, res, tail)
        pair = generalized_eig_range(np.linalg.pinv(laplacian(graph)), comp)
        error = _sandwich_error(pair, (1.0 - eps) ** d, (1.0 + eps) ** d)
    return res.ledger.get("rounds", 0), None, error


def _run_approxsc(graph, dec, params, seed, service):
    eps = float(params.get("eps", 0.1))
    t_count = min(int(params.get("terminals", 6)), graph.n)
    rng = np.random.default_rng(seed)
    terminals = sorted(int(t) for t in rng.choice(graph.n, t_count,
                                                  replace=False))
    res = approx_sc(identity_minor(graph), terminals, eps,
                    make_oracle_solver(), seed=seed, service=service,
                    audit=graph.n <= ORACLE_CAP)
    error = None
    if "eig_range" in res.ledger:
        error = _sandwich_error(res.ledger["eig_range"],
                                math.exp(-eps), math.exp(eps))
    return res.ledger["rounds"], None, error


def _run_solve(graph, dec, params, seed, service):
    eps = float(params.get("eps", 1e-3))
    rng = np.random.default_rng(seed + 101)
    b = rng.standard_normal(graph.n)
    b -= b.mean()
    kwargs = {k: params[k] for k in ("k", "d", "chain_eps", "max_links")
              if k in params}
    res = solve_laplacian(graph, b, eps, seed=seed, service=service,
                          **kwargs)
    error = None
    if graph.n <= ORACLE_CAP:
        L = laplacian(graph)
        xs = np.linalg.pinv(L) @ b
        num = math.sqrt(max((res.x - xs) @ L @ (res.x - xs), 0.0))
        den = math.sqrt(max(b @ np.linalg.pinv(L) @ b, 1e-300))
        error = num / den
    # the loop replays one instrumented application, so the service total
    # misses the remaining iterations; the solver's own count is the truth
    return res.iterations * res.ledger["per_iter_rounds"], res.rounds, error


_MODULE_RUNNERS = {
    "aggregation": _run_aggregation,
    "ultrasparsify": _run_ultrasparsify,
    "eliminate": _run_eliminate,
    "approxsc": _run_approxsc,
    "solve": _run_solve,
}


def run_experiment(config, out_dir):
    """Run every cell of the config and write `<name>.csv` under out_dir.

    Returns (csv path, rows)."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [run_cell(c) for c in config_cells(config)]
    path = os.path.join(out_dir, f"{config['name']}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path, rows


# =============================================================================
# Report: fits, tables, figures
# =============================================================================

def fit_powerlaw(xs, ys):
    """Least squares on log-log; returns (exponent, scale, r2)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (xs > 0) & (ys > 0)
    if keep.sum() < 2:
        return None
    lx, ly = np.log(xs[keep]), np.log(ys[keep])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - ((ly - pred) ** 2).sum() / ss if ss > 0 else 1.0
    return float(coef[0]), float(math.exp(coef[1])), float(r2)


def fit_affine(xs, ys):
    """ys ~ a + b xs; returns (a, b, r2)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        return None
    A = np.vstack([np.ones_like(xs), xs]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ coef
    ss = ((ys - ys.mean()) ** 2).sum()
    r2 = 1.0 - ((ys - pred) ** 2).sum() / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), float(r2)


def _group_key(row):
    return (row["family"], row["model"], row["module"], row["params-json"])


def load_rows(csv_path):
    with open(csv_path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def emit_report(csv_path, out_dir=None):
    """Summary table plus figures next to the CSV.

    Per (family, model, params) group: a power-law fit of global rounds
    against n, and, when the group sweeps eps, an affine fit of rounds
    against log(1/eps).  Figures are rendered to PNG files alongside the
    summary so a sweep leaves a self-contained report directory.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = out_dir or os.path.dirname(os.path.abspath(csv_path))
    rows = [r for r in load_rows(csv_path) if r["status"] == "ok"]
    base = os.path.splitext(os.path.basename(csv_path))[0]
    groups = {}
    for r in rows:
        groups.setdefault(_group_key(r), []).append(r)

    summary = []
    fig_n, ax_n = plt.subplots(figsize=(6.0, 4.2))
    fig_e, ax_e = plt.subplots(figsize=(6.0, 4.2))
    drew_n = drew_e = False
    for key in sorted(groups):
        rs = groups[key]
        label = f"{key[0]}/{key[1]}"
        ns = [int(r["n"]) for r in rs]
        rounds = [int(r["rounds_global"]) for r in rs]
        entry = {"family": key[0], "model": key[1], "module": key[2],
                 "params-json": key[3], "cells": len(rs)}
        if len(set(ns)) >= 2:
            fitted = fit_powerlaw(ns, rounds)
            if fitted:
                entry.update(fit="rounds~n^p", exponent=f"{fitted[0]:.3f}",
                             r2=f"{fitted[2]:.3f}")
                order = np.argsort(ns)
                ax_n.loglog(np.asarray(ns)[order], np.asarray(rounds)[order],
                            "o-", label=f"{label} p={fitted[0]:.2f}")
                drew_n = True
        summary.append(entry)
    # eps sweeps group across params, so refit over merged rows
    eps_groups = {}
    for r in rows:
        p = json.loads(r["params-json"])
        if "eps" not in p:
            continue
        k = (r["family"], r["model"], r["module"], r["n"], r["seed"])
        eps_groups.setdefault(k, []).append((float(p["eps"]), r))
    for key in sorted(eps_groups):
        pts = eps_groups[key]
        if len({e for e, _r in pts}) < 2:
            continue
        xs = [math.log(1.0 / e) for e, _r in pts]
        ys = [int(r["rounds_global"]) for _e, r in pts]
        fitted = fit_affine(xs, ys)
        if fitted:
            summary.append({"family": key[0], "model": key[1],
                            "module": key[2], "params-json": f"n={key[3]}",
                            "cells": len(pts), "fit": "rounds~log(1/eps)",
                            "exponent": f"{fitted[1]:.3f}",
                            "r2": f"{fitted[2]:.3f}"})
            order = np.argsort(xs)
            ax_e.plot(np.asarray(xs)[order], np.asarray(ys)[order], "o-",
                      label=f"{key[0]}/{key[1]} n={key[3]}")
            drew_e = True

    figures = []
    if drew_n:
        ax_n.set_xlabel("n")
        ax_n.set_ylabel("rounds (global)")
        ax_n.legend(fontsize=7)
        ax_n.set_title(base)
        p = os.path.join(out_dir, f"{base}-rounds-vs-n.png")
        fig_n.tight_layout()
        fig_n.savefig(p, dpi=120)
        figures.append(p)
    if drew_e:
        ax_e.set_xlabel("log(1/eps)")
        ax_e.set_ylabel("rounds (global)")
        ax_e.legend(fontsize=7)
        ax_e.set_title(base)
        p = os.path.join(out_dir, f"{base}-rounds-vs-eps.png")
        fig_e.tight_layout()
        fig_e.savefig(p, dpi=120)
        figures.append(p)
    plt.close(fig_n)
    plt.close(fig_e)

    cols = ("family", "model", "module", "params-json", "cells", "fit",
            "exponent", "r2")
    summary_path = os.path.join(out_dir, f"{base}-summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for entry in summary:
            writer.writerow({c: entry.get(c, "") for c in cols})
    return {"summary": summary_path, "figures": figures,
            "groups": len(groups), "rows": len(rows)}
