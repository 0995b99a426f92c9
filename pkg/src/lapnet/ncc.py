"""Node-capacitated clique primitives: aggregation, multicast trees, multicast.

Every node may send and receive only cap = cap_factor * ceil(log2 n) global
messages per round, and receive overflow is dropped by the simulator's
policy.  Instead of per-message acknowledgements (whose own drops make clean
termination awkward) each logical message is sent twice with independent
random jitter; receivers deduplicate by (sender, group, phase).  Losing both
copies stalls the protocol, the simulator reports the stall as a deadlock,
and the runner retries with a fresh seed, so failures are loud, retried, and
visible in the round count, never silent wrong answers.

Aggregation climbs a cap/2-ary tree over each group's sorted members rooted
at the target.  Multicast trees hash each group onto about |C|/log n relay
nodes between the source and the members, which is what keeps the measured
tree congestion near L/n + log n instead of the worst-case group count.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graphs import ValidationError
from .netsim import (DEFAULT_MSG_FACTOR, DEFAULT_NCC_CAP_FACTOR, DeadlockError,
                     NodeProgram, Step, run_network, word_bits)

UP, DOWN, = 0, 1
REDUNDANCY = 2
MAX_ATTEMPTS = 5


def ncc_cap(n, cap_factor=DEFAULT_NCC_CAP_FACTOR):
    return cap_factor * word_bits(n)


def _fanout(cap):
    return max(2, cap // 2)


def dary_parent_map(ordered_nodes, d):
    """Heap-shaped d-ary tree over the given node order; position 0 is the root."""
    parent = {ordered_nodes[0]: None}
    for pos in range(1, len(ordered_nodes)):
        parent[ordered_nodes[pos]] = ordered_nodes[(pos - 1) // d]
    return parent


class NCCProgram(NodeProgram):
    """Participant in a set of group trees over the global channel.

    tasks: per group dict with keys group, parent, children, input, mode
    ("agg" folds toward the root; "mcast" pushes the root's input down).
    """

    def __init__(self, node_id, n, tasks, op, cap, seed, jitter,
                 msg_factor=DEFAULT_MSG_FACTOR):
        super().__init__(node_id, n)
        from .aggregation import (OPS, atoms_to_value, check_sum_width,
                                  value_to_atoms)
        self.op = op
        self.msg_factor = msg_factor
        self._width_check = check_sum_width
        self._fold = OPS[op]
        self._to_atoms = lambda v: value_to_atoms(op, v)
        self._from_atoms = lambda a: atoms_to_value(op, a)
        self.cap = cap
        self.jitter = max(1, jitter)
        self.rng = np.random.default_rng((seed, node_id))
        self.tasks = {}
        for t in tasks:
            self.tasks[t["group"]] = {
                "parent": t["parent"],
                "children": tuple(t["children"]),
                "pending": len(t["children"]),
                "acc": t.get("input"),
                "mode": t.get("mode", "agg"),
                "fired": False,
                "result": None,
            }
        self.sendq = []      # heap of (ready_round, tiebreak, dst, payload)
        self._tick = 0
        self.seen = set()    # (src, group, tag)
        self.results = {}

    def _schedule(self, now, dst, payload):
        for _copy in range(REDUNDANCY):
            ready = now + 1 + int(self.rng.integers(0, self.jitter))
            heapq.heappush(self.sendq, (ready, self._tick, dst, payload))
            self._tick += 1

    def _absorb(self, group, value):
        st = self.tasks[group]
        st["acc"] = value if st["acc"] is None else self._fold(st["acc"], value)
        st["pending"] -= 1

    def _settle(self, now, group, value):
        st = self.tasks[group]
        if st["result"] is not None:
            return
        st["result"] = value
        self.results[group] = value
        if st["mode"] == "mcast":
            for c in st["children"]:
                self._schedule(now, c, (DOWN, group) + self._to_atoms(value))

    def step(self, round_no, local_inbox, global_inbox):
        for (src, payload) in global_inbox:
            tag, group = payload[0], payload[1]
            key = (src, group, tag)
            if key in self.seen:
                continue
            self.seen.add(key)
            value = self._from_atoms(payload[2:])
            if tag == UP:
                self._absorb(group, value)
            else:
                self._settle(round_no, group, value)
        for group in sorted(self.tasks):
            st = self.tasks[group]
            if st["mode"] == "agg" and not st["fired"] and st["pending"] == 0:
                st["fired"] = True
                if self.op == "sum":
                    self._width_check(st["acc"], word_bits(self.n),
                                      self.msg_factor - 2)
                if st["parent"] is None:
                    st["result"] = st["acc"]
                    self.results[group] = st["acc"]
                else:
                    self._schedule(round_no, st["parent"],
                                   (UP, group) + self._to_atoms(st["acc"]))
            if st["mode"] == "mcast" and st["parent"] is None and not st["fired"]:
                st["fired"] = True
                self._settle(round_no, group, st["acc"])
        out = []
        while self.sendq and len(out) < self.cap and self.sendq[0][0] <= round_no:
            _r, _t, dst, payload = heapq.heappop(self.sendq)
            out.append((dst, payload))
        done = all(
            (st["mode"] == "agg" and (st["fired"] if st["parent"] is not None
                                      else st["result"] is not None))
            or (st["mode"] == "mcast" and st["result"] is not None)
            for st in self.tasks.values())
        return Step(global_=out, halt=done and not self.sendq and not out)


def _jitter_for(tasks_per_node, cap):
    worst = 1
    for tasks in tasks_per_node:
        load = sum(len(t["children"]) for t in tasks)
        worst = max(worst, load)
    return max(4, math.ceil(2 * REDUNDANCY * worst / cap))


def _run_groups(host, tasks_per_node, op, *, seed, msg_factor, ncc_cap_factor,
                drop_policy, max_rounds, hybrid):
    """Las Vegas runner: retries with a fresh seed when both copies of some
    message were dropped (surfaced as a deadlock).  Returns (programs, rounds,
    ledgers over all attempts)."""
    n = host.n
    cap = ncc_cap(n, ncc_cap_factor)
    jitter = _jitter_for(tasks_per_node, cap)
    model = "hybrid" if hybrid else "ncc"
    total_rounds = 0
    ledgers = []
    last_exc = None
    for attempt in range(MAX_ATTEMPTS):
        programs = [NCCProgram(u, n, tasks_per_node[u], op, cap,
                               seed + 7919 * attempt, jitter,
                               msg_factor=msg_factor)
                    for u in range(n)]
        try:
            ledger = run_network(host, programs, model, seed=seed + 7919 * attempt,
                                 msg_factor=msg_factor,
                                 ncc_cap_factor=ncc_cap_factor,
                                 drop_policy=drop_policy, max_rounds=max_rounds,
                                 record_payloads=False,
                                 deadlock_patience=max(200, 4 * jitter + 50))
        except DeadlockError as exc:
            total_rounds += getattr(exc, "rounds", 0)
            last_exc = exc
            continue
        total_rounds += ledger.rounds
        ledgers.append(ledger)
        return programs, total_rounds, ledgers
    raise DeadlockError(f"aggregation failed {MAX_ATTEMPTS} times: {last_exc}")


def _group_tasks(n, parent_maps, inputs, mode):
    tasks = [[] for _ in range(n)]
    for gid, parent in enumerate(parent_maps):
        children = {}
        for x, p in parent.items():
            if p is not None:
                children.setdefault(p, []).append(x)
        for x in parent:
            inp = None
            if mode == "agg":
                inp = inputs[gid].get(x)
            elif parent[x] is None:
                inp = inputs[gid]
            tasks[x].append({
                "group": gid,
                "parent": parent[x],
                "children": sorted(children.get(x, ())),
                "input": inp,
                "mode": mode,
            })
    return tasks


def ncc_aggregate(host, groups, inputs, targets, op, *, seed=0,
                  msg_factor=DEFAULT_MSG_FACTOR,
                  ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR, drop_policy="random",
                  max_rounds=500_000, hybrid=False):
    """Aggregate each group's member inputs to its target node.

    Returns (per-group values, rounds, ledgers).
    """
    cap = ncc_cap(host.n, ncc_cap_factor)
    d = _fanout(cap)
    parent_maps = []
    for gid, (group, target) in enumerate(zip(groups, targets)):
        members = sorted(set(group))
        if target not in members:
            raise ValidationError(f"target {target} outside group {gid}")
        order = [target] + [x for x in members if x != target]
        parent_maps.append(dary_parent_map(order, d))
    tasks = _group_tasks(host.n, parent_maps, inputs, "agg")
    programs, rounds, ledgers = _run_groups(
        host, tasks, op, seed=seed, msg_factor=msg_factor,
        ncc_cap_factor=ncc_cap_factor, drop_policy=drop_policy,
        max_rounds=max_rounds, hybrid=hybrid)
    values = {}
    for gid, target in enumerate(targets):
        if gid not in programs[target].results:
            raise ValidationError(f"group {gid} never completed")
        values[gid] = programs[target].results[gid]
    return values, rounds, ledgers


def ncc_build_multicast_trees(n, groups, sources, seed=0,
                              cap_factor=DEFAULT_NCC_CAP_FACTOR):
    """Relay-balanced multicast trees; returns (parent maps, congestion).

    Each group hashes to about |C|/log n relay nodes placed between the
    source and the members; congestion counts how many trees use a node in a
    relaying (internal) role.
    """
    cap = ncc_cap(n, cap_factor)
    d = _fanout(cap)
    wb = word_bits(n)
    rng = np.random.default_rng(seed)
    parent_maps = []
    internal_load = np.zeros(n, dtype=int)
    for group, source in zip(groups, sources):
        members = sorted(set(group) - {source})
        if not members:
            parent_maps.append({source: None})
            continue
        r = max(1, math.ceil(len(members) / wb))
        relays = [int(x) for x in rng.choice(n, size=min(r, n), replace=False)]
        relays = [x for x in relays if x != source]
        if not relays:
            relays = [members[0]]
        order = [source] + relays
        parent = dary_parent_map(order, d)
        leftover = [x for x in members if x not in parent]
        for i, x in enumerate(leftover):
            parent[x] = relays[i % len(relays)]
        parent_maps.append(parent)
        children = set(p for p in parent.values() if p is not None)
        for x in children:
            internal_load[x] += 1
    return parent_maps, int(internal_load.max(initial=0))


def ncc_multicast(host, parent_maps, values, op="sum", *, seed=0,
                  msg_factor=DEFAULT_MSG_FACTOR,
                  ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR, drop_policy="random",
                  max_rounds=500_000, hybrid=False):
    """Push one value per tree from its root to every tree node."""
    tasks = _group_tasks(host.n, parent_maps, values, "mcast")
    programs, rounds, ledgers = _run_groups(
        host, tasks, op, seed=seed, msg_factor=msg_factor,
        ncc_cap_factor=ncc_cap_factor, drop_policy=drop_policy,
        max_rounds=max_rounds, hybrid=hybrid)
    out = []
    for gid, parent in enumerate(parent_maps):
        got = {x: programs[x].results.get(gid) for x in parent}
        if any(v is None for v in got.values()):
            raise ValidationError(f"multicast {gid} left nodes unserved")
        out.append(got)
    return out, rounds, ledgers


def message_totals(ledgers):
    """Per-channel delivered-message totals over a batch of run ledgers."""
    return {"local": sum(l.message_count("local") for l in ledgers),
            "global": sum(l.message_count("global") for l in ledgers)}


def congested_aggregation_ncc(dist, contributions, op, *, seed=0,
                              msg_factor=DEFAULT_MSG_FACTOR,
                              ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR,
                              drop_policy="random", max_rounds=500_000,
                              hybrid=False):
    """Super-node aggregation on the clique: fold to leaders, multicast back.

    Returns (per-minor-node values known to every member, total rounds,
    per-channel message totals).
    """
    groups = [sorted(s) for s in dist.super_nodes]
    targets = list(dist.leaders)
    values, rounds_up, led_up = ncc_aggregate(
        dist.host, groups, contributions, targets, op, seed=seed,
        msg_factor=msg_factor, ncc_cap_factor=ncc_cap_factor,
        drop_policy=drop_policy, max_rounds=max_rounds, hybrid=hybrid)
    trees, _cong = ncc_build_multicast_trees(dist.host.n, groups, targets,
                                             seed=seed + 1,
                                             cap_factor=ncc_cap_factor)
    _served, rounds_down, led_down = ncc_multicast(
        dist.host, trees, values, op, seed=seed + 1, msg_factor=msg_factor,
        ncc_cap_factor=ncc_cap_factor, drop_policy=drop_policy,
        max_rounds=max_rounds, hybrid=hybrid)
    return values, rounds_up + rounds_down, message_totals(led_up + led_down)


def minor_aggregate_ncc(dist, contributions, op, mode="agg", *, seed=0,
                        msg_factor=DEFAULT_MSG_FACTOR,
                        ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR,
                        drop_policy="random", max_rounds=500_000, hybrid=False):
    """Service adapter: mode 'agg' aggregates member inputs; 'bcast' pushes
    leader values to members via multicast trees."""
    if mode == "agg":
        return congested_aggregation_ncc(
            dist, contributions, op, seed=seed, msg_factor=msg_factor,
            ncc_cap_factor=ncc_cap_factor, drop_policy=drop_policy,
            max_rounds=max_rounds, hybrid=hybrid)
    groups = [sorted(s) for s in dist.super_nodes]
    targets = list(dist.leaders)
    trees, _cong = ncc_build_multicast_trees(dist.host.n, groups, targets,
                                             seed=seed, cap_factor=ncc_cap_factor)
    _served, rounds, ledgers = ncc_multicast(
        dist.host, trees, contributions, op, seed=seed, msg_factor=msg_factor,
        ncc_cap_factor=ncc_cap_factor, drop_policy=drop_policy,
        max_rounds=max_rounds, hybrid=hybrid)
    return dict(contributions), rounds, message_totals(ledgers)
