"""Command line front end.

Subcommands: gen, aggregate, ultrasparsify, eliminate, approxsc, solve,
experiment, report.  Graph files are plain text, header line ``n m W``
followed by one ``u v w`` line per edge.  Every randomized command takes
--seed and is deterministic for a fixed seed.  Results go to stdout as
JSON; ledger exports and the solution vector go to files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .aggregation import AggregationService, congested_aggregation_congest
from .approxsc import approx_sc, make_oracle_solver
from .elimination import eliminate
from .experiments import ORACLE_CAP, composite_vs_pinv, emit_report, \
    run_experiment
from .generators import FAMILIES, generate_graph
from .graphs import bfs_tree, laplacian, load_graph, load_parts, \
    save_graph, validate_partition
from .minors import contract_edges, identity_minor
from .ncc import ncc_aggregate, ncc_build_multicast_trees, ncc_multicast
from .oracle import generalized_eig_range
from .solver import asymptotic_parameters, build_chain, solve_laplacian
from .ultrasparsify import ultrasparsify


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON-serializable: {type(x)!r}")


def _read_vector(path):
    with open(path, "r", encoding="utf-8") as fh:
        toks = fh.read().split()
    return np.array([float(t) for t in toks])


def _read_ids(path):
    with open(path, "r", encoding="utf-8") as fh:
        return sorted({int(t) for t in fh.read().split()})


def _export_ledgers(ledgers, csv_path, json_path):
    """Concatenate phase ledgers into one timeline for export."""
    if csv_path:
        import csv as _csv
        offset = 0
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["round", "channel", "src", "dst", "bits"])
            for led in ledgers:
                bpw = led.bits_per_word
                for (rnd, channel, src, dst, words) in led.records:
                    writer.writerow([rnd + offset, channel, src, dst,
                                     words * bpw])
                offset += led.rounds
    if json_path:
        total = {"rounds": sum(l.rounds for l in ledgers),
                 "msgs_local": sum(l.message_count("local")
                                   for l in ledgers),
                 "msgs_global": sum(l.message_count("global")
                                    for l in ledgers),
                 "drops": sum(len(l.drops) for l in ledgers),
                 "phases": [l.summary() for l in ledgers]}
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(total, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _add_netsim_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=1_000_000)
    p.add_argument("--msg-factor", type=int, default=4)
    p.add_argument("--ncc-cap-factor", type=int, default=1)
    p.add_argument("--drop-policy", choices=("random", "by-sender-id"),
                   default="random")
    p.add_argument("--ledger-csv", metavar="PATH")
    p.add_argument("--ledger-json", metavar="PATH")


# -----------------------------------------------------------------------------
# gen
# -----------------------------------------------------------------------------

def cmd_gen(args):
    kwargs = {"seed": args.seed, "weight_cap": args.weight_cap}
    if args.k is not None:
        kwargs["k"] = args.k
    if args.rows is not None:
        kwargs["rows"] = args.rows
    if args.cols is not None:
        kwargs["cols"] = args.cols
    if args.drop_fraction is not None:
        kwargs["drop_fraction"] = args.drop_fraction
    graph, dec = generate_graph(args.family, args.n, **kwargs)
    save_graph(graph, args.out)
    out = {"family": args.family, "n": graph.n, "m": graph.m,
           "out": args.out}
    if dec is not None:
        out["width"] = dec.width
    _emit(out)


# -----------------------------------------------------------------------------
# aggregate
# -----------------------------------------------------------------------------

def _partition_minor(graph, parts):
    """Contract each part's spanning forest; parts must be disjoint,
    connected, and cover the node set."""
    eids = []
    for part in parts:
        _parent, tree = bfs_tree(graph, min(part), within=part)
        eids.extend(tree)
    dist, _nmap = contract_edges(identity_minor(graph), sorted(eids))
    node_of = {}
    for u, members in enumerate(dist.super_nodes):
        for x in members:
            node_of[x] = u
    return dist, node_of


def cmd_aggregate(args):
    graph = load_graph(args.graph)
    partition = load_parts(args.parts)
    parts = [sorted(p) for p in partition.parts]
    validate_partition(graph, partition)
    if args.inputs:
        vals = _read_vector(args.inputs)
        if vals.size != graph.n:
            raise SystemExit("inputs file must hold one value per node")
    else:
        vals = np.arange(graph.n, dtype=float)

    if args.model == "congest":
        inputs = {pid: {u: float(vals[u]) for u in part}
                  for pid, part in enumerate(partition.parts)}
        run = congested_aggregation_congest(
            graph, partition, inputs, args.op, provider=args.provider,
            seed=args.seed, msg_factor=args.msg_factor,
            max_rounds=args.max_rounds)
        q = run.quality
        _export_ledgers([run.ledger], args.ledger_csv, args.ledger_json)
        _emit({"aggregates": {str(p): run.values[p] for p in run.values},
               "rounds": run.rounds, "c": q.congestion, "d": q.dilation,
               "Q": q.quality, "model": args.model,
               "rho": run.extra.get("rho")})
        return

    # clique route: parts become super-nodes of a contraction minor
    covered = set().union(*partition.parts) if parts else set()
    if covered != set(range(graph.n)) or \
            partition.multiplicity(graph.n) > 1:
        raise SystemExit("ncc/hybrid aggregation needs a disjoint cover")
    dist, node_of = _partition_minor(graph, parts)
    contributions = {u: {x: float(vals[x]) for x in dist.super_nodes[u]}
                     for u in range(dist.minor.n)}
    groups = [sorted(s) for s in dist.super_nodes]
    targets = list(dist.leaders)
    hybrid = args.model == "hybrid"
    values, r_up, led_up = ncc_aggregate(
        graph, groups, contributions, targets, args.op, seed=args.seed,
        msg_factor=args.msg_factor, ncc_cap_factor=args.ncc_cap_factor,
        drop_policy=args.drop_policy, max_rounds=args.max_rounds,
        hybrid=hybrid)
    trees, _cong = ncc_build_multicast_trees(
        graph.n, groups, targets, seed=args.seed + 1,
        cap_factor=args.ncc_cap_factor)
    _served, r_down, led_down = ncc_multicast(
        graph, trees, values, args.op, seed=args.seed + 1,
        msg_factor=args.msg_factor, ncc_cap_factor=args.ncc_cap_factor,
        drop_policy=args.drop_policy, max_rounds=args.max_rounds,
        hybrid=hybrid)
    _export_ledgers(led_up + led_down, args.ledger_csv, args.ledger_json)
    aggregates = {str(pid): values[node_of[min(part)]]
                  for pid, part in enumerate(parts)}
    _emit({"aggregates": aggregates, "rounds": r_up + r_down,
           "c": None, "d": None, "Q": None, "model": args.model})


# -----------------------------------------------------------------------------
# ultrasparsify / eliminate / approxsc
# -----------------------------------------------------------------------------

def cmd_ultrasparsify(args):
    graph = load_graph(args.graph)
    service = AggregationService("congest", seed=args.seed)
    us = ultrasparsify(graph, args.k, seed=args.seed,
                       dist=identity_minor(graph), service=service)
    out = {"edges": us.h.m, "eliminated": us.h.n - len(us.core),
           "core_n": us.core_graph.n, "rounds": us.rounds,
           "total_stretch": us.extras["total_stretch"]}
    if graph.n <= ORACLE_CAP:
        out["eig_range"] = generalized_eig_range(laplacian(graph),
                                                 laplacian(us.h))
    _emit(out)


def cmd_eliminate(args):
    graph = load_graph(args.graph)
    service = AggregationService("congest", seed=args.seed)
    res = eliminate(graph, args.d, args.eps, dist=identity_minor(graph),
                    seed=args.seed, gamma_scale=args.gamma_scale,
                    service=service, enforce_shrink=False)
    per_round = res.ledger["per_round"]
    out = {"t_sizes": [r.get("T_hat") for r in per_round
                       if not r.get("skipped")],
           "rounds": res.ledger["rounds"],
           "congestion_max": max((r.get("max_step_load", 0)
                                  for r in per_round), default=0)}
    if graph.n <= ORACLE_CAP:
        tail = np.linalg.pinv(laplacian(res.graphs[-1]))
        comp = composite_vs_pinv(graph, res, tail)
        out["eig_range"] = generalized_eig_range(
            np.linalg.pinv(laplacian(graph)), comp)
    _emit(out)


class ChainSolver:
    """Laplacian solves through the preconditioner chain, one chain per
    distinct graph.  Interface shared with the dense oracle solver."""

    def __init__(self, eps=1e-8, seed=0):
        self.eps = eps
        self.seed = seed
        self.calls = 0
        self._for = None
        self._chain = None

    def __call__(self, graph, columns):
        cols = np.asarray(columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        self.calls += cols.shape[1]
        if self._for is not graph:
            self._chain = build_chain(graph, seed=self.seed)
            self._for = graph
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            res = solve_laplacian(graph, cols[:, j], self.eps,
                                  seed=self.seed, chain=self._chain)
            out[:, j] = res.x
        return out


def cmd_approxsc(args):
    graph = load_graph(args.graph)
    terminals = _read_ids(args.terminals)
    solver = (make_oracle_solver() if args.use_oracle_solver
              else ChainSolver(seed=args.seed))
    service = AggregationService("congest", seed=args.seed)
    res = approx_sc(identity_minor(graph), terminals, args.eps, solver,
                    seed=args.seed, service=service,
                    audit=graph.n <= ORACLE_CAP)
    led = res.ledger
    out = {"edges": led["edges_final"], "solver_calls": led["solver_calls"],
           "rounds": led["rounds"], "iterations": led["iterations"],
           "stop": led["stop"]}
    if "eig_range" in led:
        out["eig_range"] = led["eig_range"]
    _emit(out)


# -----------------------------------------------------------------------------
# solve
# -----------------------------------------------------------------------------

def cmd_solve(args):
    graph = load_graph(args.graph)
    b = _read_vector(args.b)
    model = None if args.model == "sequential" else args.model
    if args.asymptotic_params:
        _emit(asymptotic_parameters(graph.n, args.eps))
        return
    kwargs = {}
    if args.k is not None:
        kwargs["k"] = args.k
    if args.d is not None:
        kwargs["d"] = args.d
    if args.chain_eps is not None:
        kwargs["chain_eps"] = args.chain_eps
    res = solve_laplacian(graph, b, args.eps, model=model, seed=args.seed,
                          max_rounds=args.max_rounds, **kwargs)
    np.savetxt(args.out, res.x, fmt="%.17g")
    ledger = {"iterations": res.iterations,
              "predicted_iterations": res.predicted,
              "converged": res.converged,
              "eig_range": res.eig_range,
              "rounds": res.rounds,
              "x_out": args.out,
              **{k: v for k, v in res.ledger.items() if k != "chain"}}
    if graph.n <= ORACLE_CAP:
        L = laplacian(graph)
        xs = np.linalg.pinv(L) @ (b - b.mean())
        num = math.sqrt(max((res.x - xs) @ L @ (res.x - xs), 0.0))
        den = math.sqrt(max((b - b.mean()) @ np.linalg.pinv(L)
                            @ (b - b.mean()), 1e-300))
        ledger["error_vs_oracle"] = num / den
    _emit(ledger)


# -----------------------------------------------------------------------------
# experiment / report
# -----------------------------------------------------------------------------

def cmd_experiment(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    path, rows = run_experiment(config, args.out)
    out = {"csv": path, "rows": len(rows),
           "ok": sum(1 for r in rows if r["status"] == "ok")}
    if not args.no_report:
        out["report"] = emit_report(path, args.out)
    _emit(out)


def cmd_report(args):
    _emit(emit_report(args.csv, args.out))


# -----------------------------------------------------------------------------

def build_parser():
    top = argparse.ArgumentParser(prog="lapnet", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a generated graph file")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--weight-cap", type=float, default=1)
    p.add_argument("--drop-fraction", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("aggregate", help="part-wise aggregation")
    p.add_argument("--model", choices=("congest", "ncc", "hybrid"),
                   required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--parts", required=True,
                   help="one line per part, node ids space-separated")
    p.add_argument("--op", choices=("min", "max", "sum"), default="sum")
    p.add_argument("--provider", choices=("empty", "baseline", "treedec"),
                   default="baseline")
    p.add_argument("--inputs", help="one value per node; default node ids")
    _add_netsim_flags(p)
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("ultrasparsify", help="tree-based ultra-sparsifier")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_ultrasparsify)

    p = sub.add_parser("eliminate", help="d rounds of DD-subset elimination")
    p.add_argument("--graph", required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--gamma-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eliminate)

    p = sub.add_parser("approxsc", help="terminal Schur complement sparsifier")
    p.add_argument("--graph", required=True)
    p.add_argument("--terminals", required=True,
                   help="file of terminal node ids")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--use-oracle-solver", action="store_true",
                   help="dense pseudo-inverse instead of the chain solver")
    p.set_defaults(fn=cmd_approxsc)

    p = sub.add_parser("solve", help="Laplacian solve, chain-preconditioned")
    p.add_argument("--graph", required=True)
    p.add_argument("--b", required=True, help="right-hand side, one per node")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--model",
                   choices=("congest", "ncc", "hybrid", "sequential"),
                   default="sequential")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--chain-eps", type=float)
    p.add_argument("--max-rounds", type=int, default=1_000_000)
    p.add_argument("--out", default="x.txt", help="solution vector path")
    p.add_argument("--asymptotic-params", action="store_true",
                   help="print the parameter schedule and exit")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("experiment", help="run a config-driven sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-report", action="store_true")
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="summary fits and figures for a CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)
    return top


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
