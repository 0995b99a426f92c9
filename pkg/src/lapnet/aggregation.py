"""Part-wise aggregation on the simulated network.

One engine drives everything: every part gets a rooted (possibly Steiner)
tree, leaf-to-root convergecast folds the inputs with a distributive
operator, and root-to-leaf broadcast delivers the aggregate back to every
member.  Per-edge FIFO queues serialize parts that share an edge, which is
what realizes both the own-tree / pipelined-BFS baseline and the shortcut
route with random start delays on the copy graph.

Entry points:

  aggregation_oracle            sequential per-part fold (ground truth)
  baseline_congested_aggregation   own trees below sqrt(n), shared BFS above
  congested_aggregation_congest    copy graph + shortcuts + random delays,
                                   multiplexed back onto the host
  AggregationService            uniform facade (sequential / congest / ncc /
                                hybrid) used by the solver pipeline; measures
                                rounds once per communication schedule and
                                charges repeat calls at the measured price
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graphs import Partition, ValidationError, bfs_tree
from .netsim import (DEFAULT_MSG_FACTOR, DEFAULT_NCC_CAP_FACTOR, NodeProgram,
                     Step, run_network)
from .shortcuts import (build_copy_graph, get_provider, lift_tree_decomposition,
                        part_subgraph_edges, shortcut_quality, wrap_for_host)
from . import ncc as ncc_mod


class AggregationOverflow(RuntimeError):
    """An integer aggregate outgrew the message word budget."""


# =============================================================================
# Distributive operators
# =============================================================================

def _fold_sum(a, b):
    return a + b


def _fold_min(a, b):
    return a if a <= b else b


def _fold_max(a, b):
    return a if a >= b else b


def _fold_idmin(a, b):
    # values are (key, id) pairs; lexicographic min
    return a if tuple(a) <= tuple(b) else b


OPS = {
    "sum": _fold_sum,
    "min": _fold_min,
    "max": _fold_max,
    "idmin": _fold_idmin,
}


def fold_values(op, values):
    it = iter(values)
    try:
        acc = next(it)
    except StopIteration:
        raise ValidationError("cannot fold an empty part") from None
    fold = OPS[op]
    for v in it:
        acc = fold(acc, v)
    return acc


def value_to_atoms(op, value):
    if op == "idmin":
        return (value[0], int(value[1]))
    return (value,)


def atoms_to_value(op, atoms):
    if op == "idmin":
        return (atoms[0], int(atoms[1]))
    return atoms[0]


def check_sum_width(value, word_bits, budget_words):
    """Integer sums must fit the payload budget; floats ride as one word."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        need = max(1, math.ceil((int(abs(value)).bit_length() + 1) / word_bits))
        if need > budget_words:
            raise AggregationOverflow(
                f"running sum {value} needs {need} words > budget {budget_words}")


def aggregation_oracle(parts_inputs, op):
    """parts_inputs: per part, iterable of values.  Returns per-part folds."""
    return [fold_values(op, vals) for vals in parts_inputs]


# =============================================================================
# Part trees
# =============================================================================

@dataclass(frozen=True)
class PartTree:
    part_id: int
    root: int
    parent: tuple     # pairs (node, parent)
    members: tuple    # nodes carrying inputs / receiving the result

    def parent_map(self):
        return dict(self.parent)


def steiner_tree(graph, required, allowed_edges, root=None):
    """BFS tree over the allowed edges, pruned to branches that serve ``required``."""
    required = set(required)
    if root is None:
        root = min(required)
    adj = {}
    for eid in allowed_edges:
        a, b, _w = graph.edges[eid]
        if a == b:
            continue
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    parent = {root: None}
    order = [root]
    q = deque([root])
    while q:
        x = q.popleft()
        for y in sorted(adj.get(x, ())):
            if y not in parent:
                parent[y] = x
                order.append(y)
                q.append(y)
    missing = required - set(parent)
    if missing:
        raise ValidationError(f"part not connected over its allowed edges: {missing}")
    keep = set(required)
    for x in reversed(order):
        if x in keep and parent[x] is not None:
            keep.add(parent[x])
    return {x: parent[x] for x in keep}


def tree_from_edge_ids(graph, nodes, edge_ids, root):
    """Parent map over explicitly given tree edges (minor super-node trees)."""
    adj = {}
    for eid in edge_ids:
        a, b, _w = graph.edges[eid]
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    parent = {root: None}
    q = deque([root])
    while q:
        x = q.popleft()
        for y in sorted(adj.get(x, ())):
            if y not in parent:
                parent[y] = x
                q.append(y)
    if set(parent) != set(nodes):
        raise ValidationError("given tree edges do not span the part")
    return parent


def make_part_tree(part_id, parent_map, members):
    root = next(x for x, p in parent_map.items() if p is None)
    pairs = tuple(sorted((x, p) for x, p in parent_map.items() if p is not None))
    return PartTree(part_id, root, pairs, tuple(sorted(members)))


# =============================================================================
# The queued convergecast / broadcast program
# =============================================================================

UP, DOWN = 0, 1


class TreeAggProgram(NodeProgram):
    """Per-node participant in any number of part trees.

    tasks: list of dicts with keys part, parent, children, input (None for
    relays), delay, mode ("agg" or "bcast").  In bcast mode the root's input
    is the value to distribute.
    """

    def __init__(self, node_id, n, tasks, op, msg_factor=DEFAULT_MSG_FACTOR,
                 word_bits_=None):
        super().__init__(node_id, n)
        self.op = op
        self.fold = OPS[op]
        self.msg_factor = msg_factor
        self.word_bits = word_bits_ or max(1, math.ceil(math.log2(max(n, 2))))
        self.tasks = {}
        for t in tasks:
            self.tasks[t["part"]] = {
                "parent": t["parent"],
                "children": tuple(t["children"]),
                "pending": len(t["children"]),
                "acc": t.get("input"),
                "delay": t.get("delay", 0),
                "mode": t.get("mode", "agg"),
                "up_sent": False,
                "result": None,
                "down_out": False,
            }
        self.queues = {}
        self.results = {}

    def _enqueue(self, nbr, payload):
        self.queues.setdefault(nbr, deque()).append(payload)

    def _absorb(self, part, value):
        st = self.tasks[part]
        if st["acc"] is None:
            st["acc"] = value
        else:
            st["acc"] = self.fold(st["acc"], value)
        if self.op == "sum":
            check_sum_width(st["acc"], self.word_bits, self.msg_factor - 2)

    def _settle(self, part, value):
        st = self.tasks[part]
        st["result"] = value
        self.results[part] = value
        if not st["down_out"]:
            for c in st["children"]:
                self._enqueue(c, (part, DOWN) + value_to_atoms(self.op, value))
            st["down_out"] = True

    def step(self, round_no, local_inbox, global_inbox):
        for src, payload in local_inbox.items():
            part, phase = payload[0], payload[1]
            value = atoms_to_value(self.op, payload[2:])
            st = self.tasks.get(part)
            if st is None:
                raise ValidationError(f"node {self.node_id} got stray part {part}")
            if phase == UP:
                self._absorb(part, value)
                st["pending"] -= 1
            else:
                self._settle(part, value)
        for part in sorted(self.tasks):
            st = self.tasks[part]
            if round_no < st["delay"] or st["result"] is not None:
                continue
            if st["mode"] == "bcast":
                if st["parent"] is None:
                    self._settle(part, st["acc"])
                continue
            if st["pending"] == 0 and not st["up_sent"]:
                st["up_sent"] = True
                if self.op == "sum":
                    check_sum_width(st["acc"], self.word_bits, self.msg_factor - 2)
                if st["parent"] is None:
                    self._settle(part, st["acc"])
                else:
                    self._enqueue(st["parent"],
                                  (part, UP) + value_to_atoms(self.op, st["acc"]))
        out = {}
        for nbr in sorted(self.queues):
            q = self.queues[nbr]
            if q:
                out[nbr] = q.popleft()
        finished = all(st["result"] is not None and st["down_out"]
                       for st in self.tasks.values())
        queued = any(self.queues.values())
        return Step(local=out, halt=finished and not queued and not out)


def _tasks_from_trees(n, part_trees, inputs, delays, mode):
    """Distribute PartTree structures into per-node task lists."""
    tasks = [[] for _ in range(n)]
    for pt in part_trees:
        parent = pt.parent_map()
        children = {}
        for x, p in pt.parent:
            children.setdefault(p, []).append(x)
        nodes = set(parent) | {pt.root} | set(x for x, _p in pt.parent)
        members = set(pt.members)
        for x in sorted(nodes):
            inp = None
            if mode == "agg" and x in members:
                inp = inputs[pt.part_id].get(x)
            if mode == "bcast" and x == pt.root:
                inp = inputs[pt.part_id]
            tasks[x].append({
                "part": pt.part_id,
                "parent": parent.get(x),
                "children": sorted(children.get(x, ())),
                "input": inp,
                "delay": 0 if delays is None else int(delays[pt.part_id]),
                "mode": mode,
            })
    return tasks


@dataclass
class AggregationRun:
    values: dict           # part id -> aggregate
    rounds: int
    ledger: object = None
    quality: object = None
    extra: dict = field(default_factory=dict)


def run_tree_aggregation(graph, part_trees, inputs, op, *, mode="agg", delays=None,
                         model="congest", seed=0, msg_factor=DEFAULT_MSG_FACTOR,
                         max_rounds=200_000, record_payloads=False):
    """Direct simulation of the engine on ``graph`` (no copy multiplexing)."""
    tasks = _tasks_from_trees(graph.n, part_trees, inputs, delays, mode)
    programs = [TreeAggProgram(u, graph.n, tasks[u], op, msg_factor)
                for u in range(graph.n)]
    ledger = run_network(graph, programs, model, seed=seed, msg_factor=msg_factor,
                         max_rounds=max_rounds, record_payloads=record_payloads)
    values = {}
    for pt in part_trees:
        got = {programs[x].results.get(pt.part_id) for x in pt.members}
        got.discard(None)
        if len(got) != 1:
            raise ValidationError(f"members of part {pt.part_id} disagree: {got}")
        values[pt.part_id] = got.pop()
    return AggregationRun(values=values, rounds=ledger.rounds, ledger=ledger)


# =============================================================================
# Baseline scheme and the shortcut pipeline
# =============================================================================

def baseline_part_trees(graph, partition):
    """Own BFS trees for parts up to sqrt(n); Steiner over the shared BFS tree above."""
    threshold = math.isqrt(graph.n)
    shared = None
    trees = []
    for pid, part in enumerate(partition.parts):
        if len(part) <= threshold:
            parent_raw, _ = bfs_tree(graph, min(part), within=part)
            if len(parent_raw) != len(part):
                raise ValidationError(f"part {pid} is not connected")
            parent = {x: (None if pr is None else pr[0])
                      for x, pr in parent_raw.items()}
        else:
            if shared is None:
                _p, shared = bfs_tree(graph, 0)
            allowed = set(shared) | part_subgraph_edges(graph, part)
            parent = steiner_tree(graph, part, allowed, root=min(part))
        trees.append(make_part_tree(pid, parent, part))
    return trees


def baseline_congested_aggregation(graph, partition, inputs, op, *, seed=0,
                                   msg_factor=DEFAULT_MSG_FACTOR,
                                   max_rounds=200_000, record_payloads=False):
    """The direct own-trees / pipelined-BFS scheme on the host graph."""
    trees = baseline_part_trees(graph, partition)
    return run_tree_aggregation(graph, trees, inputs, op, seed=seed,
                                msg_factor=msg_factor, max_rounds=max_rounds,
                                record_payloads=record_payloads)


def congested_aggregation_congest(host, partition, inputs, op, *,
                                  provider="baseline", decomposition=None,
                                  seed=0, msg_factor=DEFAULT_MSG_FACTOR,
                                  max_rounds=2_000_000, use_delays=True,
                                  record_payloads=False):
    """Copy-graph route: flatten congestion, shortcut, schedule, multiplex back.

    Returns an AggregationRun whose ledger is the host ledger; extras carry
    the copy-level round count, the slot window, and the shortcut quality.
    """
    cg = build_copy_graph(host, partition)
    lifted_dec = None
    if decomposition is not None:
        lifted_dec = lift_tree_decomposition(cg, decomposition)
    shortcuts = get_provider(provider)(cg.graph, cg.parts, lifted_dec, seed)
    quality = shortcut_quality(cg.graph, cg.parts, shortcuts)
    if math.isinf(quality.dilation):
        raise ValidationError("a part is disconnected even with its shortcuts")
    trees = []
    for pid, part in enumerate(cg.parts.parts):
        allowed = part_subgraph_edges(cg.graph, part, shortcuts.edge_sets[pid])
        parent = steiner_tree(cg.graph, part, allowed, root=min(part))
        trees.append(make_part_tree(pid, parent, part))
    delays = None
    if use_delays and len(trees) > 1:
        rng = np.random.default_rng(seed)
        d = max(1, quality.dilation)
        window = math.ceil(max(1, quality.congestion) / d) * d
        delays = rng.integers(0, window + 1, size=len(trees))
    copy_inputs = {}
    for pid, part in enumerate(partition.parts):
        copy_inputs[pid] = {cg.copy_id(u, pid): inputs[pid][u] for u in part}
    tasks = _tasks_from_trees(cg.graph.n, trees, copy_inputs, delays, "agg")
    copy_programs = [TreeAggProgram(c, cg.graph.n, tasks[c], op, msg_factor)
                     for c in range(cg.graph.n)]
    host_programs = wrap_for_host(cg, copy_programs)
    ledger = run_network(host, host_programs, "congest", seed=seed,
                         msg_factor=msg_factor, max_rounds=max_rounds,
                         record_payloads=record_payloads)
    values = {}
    for pid, part in enumerate(cg.parts.parts):
        got = {copy_programs[c].results.get(pid) for c in part}
        got.discard(None)
        if len(got) != 1:
            raise ValidationError(f"copies of part {pid} disagree: {got}")
        values[pid] = got.pop()
    copy_rounds = max(p.copy_round for p in host_programs)
    return AggregationRun(values=values, rounds=ledger.rounds, ledger=ledger,
                          quality=quality,
                          extra={"copy_rounds": copy_rounds,
                                 "window": cg.rho * cg.rho,
                                 "rho": cg.rho,
                                 "delays": None if delays is None else list(delays)})


# =============================================================================
# Service facade
# =============================================================================

@dataclass
class ServiceCall:
    values: dict
    rounds: int
    simulated: bool


class AggregationService:
    """Uniform aggregate/broadcast over a minor distribution's super-nodes.

    model "sequential" folds in memory at zero rounds.  The network models
    simulate the real programs; because the schedule of a fixed distribution
    does not depend on payload values, each (distribution, direction) pair is
    simulated once and identical later calls are folded in memory and charged
    the measured round count (disable with reuse_schedule=False).  The first
    simulated call is cross-checked against the sequential fold and a
    mismatch raises.
    """

    def __init__(self, model="sequential", *, seed=0,
                 msg_factor=DEFAULT_MSG_FACTOR,
                 ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR, drop_policy="random",
                 reuse_schedule=True, max_rounds=2_000_000):
        if model not in ("sequential", "congest", "ncc", "hybrid"):
            raise ValidationError(f"unknown service model {model!r}")
        self.model = model
        self.seed = seed
        self.msg_factor = msg_factor
        self.ncc_cap_factor = ncc_cap_factor
        self.drop_policy = drop_policy
        self.reuse_schedule = reuse_schedule
        self.max_rounds = max_rounds
        self.total_rounds = 0
        self.total_msgs_local = 0
        self.total_msgs_global = 0
        self.call_count = 0
        self.simulated_count = 0
        self._schedule_cache = {}

    def _sequential(self, dist, contributions, op, mode):
        if mode == "agg":
            return {u: fold_values(op, contributions[u].values())
                    for u in range(dist.minor.n)}
        return dict(contributions)

    def _minor_trees(self, dist):
        trees = []
        for u in range(dist.minor.n):
            parent = tree_from_edge_ids(dist.host, dist.super_nodes[u],
                                        dist.trees[u], dist.leaders[u])
            trees.append(make_part_tree(u, parent, dist.super_nodes[u]))
        return trees

    def _simulate(self, dist, contributions, op, mode):
        if self.model == "congest":
            trees = self._minor_trees(dist)
            run = run_tree_aggregation(dist.host, trees, contributions, op,
                                       mode=mode, model="congest",
                                       seed=self.seed, msg_factor=self.msg_factor,
                                       max_rounds=self.max_rounds)
            msgs = {"local": run.ledger.message_count("local"),
                    "global": run.ledger.message_count("global")}
            return run.values, run.rounds, msgs
        # ncc and hybrid: aggregate to leaders, multicast back to members
        values, rounds, msgs = ncc_mod.minor_aggregate_ncc(
            dist, contributions, op, mode=mode, seed=self.seed,
            msg_factor=self.msg_factor, ncc_cap_factor=self.ncc_cap_factor,
            drop_policy=self.drop_policy, max_rounds=self.max_rounds,
            hybrid=(self.model == "hybrid"))
        return values, rounds, msgs

    def _call(self, dist, contributions, op, mode):
        self.call_count += 1
        expected = self._sequential(dist, contributions, op, mode)
        if self.model == "sequential":
            return ServiceCall(expected, 0, False)
        key = (id(dist), op if mode == "agg" else "<bcast>", mode)
        if self.reuse_schedule and key in self._schedule_cache:
            _dist_ref, rounds, msgs = self._schedule_cache[key]
            self.total_rounds += rounds
            self.total_msgs_local += msgs["local"]
            self.total_msgs_global += msgs["global"]
            return ServiceCall(expected, rounds, False)
        values, rounds, msgs = self._simulate(dist, contributions, op, mode)
        for u, v in expected.items():
            got = values[u]
            if isinstance(v, float):
                # tree folds may round differently from the sequential fold
                same = abs(got - v) <= 1e-9 * max(1.0, abs(v))
            else:
                same = got == v
            if not same:
                raise ValidationError(
                    f"simulated aggregate for super-node {u} is {got}, oracle {v}")
        self._schedule_cache[key] = (dist, rounds, msgs)
        self.total_rounds += rounds
        self.total_msgs_local += msgs["local"]
        self.total_msgs_global += msgs["global"]
        self.simulated_count += 1
        return ServiceCall(values, rounds, True)

    def aggregate(self, dist, contributions, op="sum"):
        """contributions: per minor node, dict host member -> value."""
        return self._call(dist, contributions, op, "agg")

    def broadcast(self, dist, values):
        """values: per minor node, the value its leader distributes."""
        return self._call(dist, values, "sum", "bcast")
