"""Round-synchronous message-passing simulator for CONGEST, NCC, and HYBRID runs.

Semantics
---------
Execution proceeds in phases 0, 1, 2, ...  In phase t every non-halted node
receives the messages sent to it in phase t-1 and then steps once.  The run
ends when every node has halted and nothing is in flight; the reported round
count is (phases executed - 1), so a protocol where every node halts
immediately without sending costs 0 rounds and a flood across a length-3 path
costs 3.

Channels
--------
local   one message per incident edge per direction per round; the host graph
        must be simple and loop-free.  Local messages to non-neighbors are
        program errors.
global  up to ``cap`` messages sent and received per node per round with
        cap = ncc_cap_factor * ceil(log2 n).  Send-cap violations are program
        errors; receive overflow is dropped by the configured policy and
        logged in the ledger.

A message payload is a flat tuple of atoms (ints, floats, short strings).
The word size is ceil(log2 n) bits and a message may carry at most
``msg_factor`` words (default 4); oversized messages are program errors.
Node step functions are evaluated in node-id order with sorted inboxes, so a
fixed seed reproduces the run bit for bit (the synchronous-round contract
would allow parallel evaluation; sequential evaluation realizes the same
semantics deterministically).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

MODELS = ("congest", "ncc", "hybrid")
DROP_POLICIES = ("random", "by-sender-id")
DEFAULT_MSG_FACTOR = 4
DEFAULT_NCC_CAP_FACTOR = 1


class ProgramError(RuntimeError):
    """A node program violated the model contract (bad target, oversized message)."""


class RoundLimitError(RuntimeError):
    """The run exceeded max_rounds while still making progress."""


class DeadlockError(RuntimeError):
    """No halt, no traffic: nodes idle without any message in flight."""


def word_bits(n):
    return max(1, math.ceil(math.log2(max(n, 2))))


def payload_words(payload, bits):
    words = 0
    for atom in payload:
        if isinstance(atom, bool):
            words += 1
        elif isinstance(atom, (int, np.integer)):
            words += max(1, math.ceil((int(abs(atom)).bit_length() + 1) / bits))
        elif isinstance(atom, (float, np.floating)):
            words += 1
        elif isinstance(atom, str):
            words += max(1, math.ceil(8 * len(atom) / bits))
        else:
            raise ProgramError(f"unsupported payload atom {atom!r}")
    return max(1, words)


def _as_payload(msg):
    if isinstance(msg, tuple):
        return msg
    return (msg,)


@dataclass
class Step:
    """One node's output for a phase."""

    local: dict = field(default_factory=dict)     # neighbor id -> payload
    global_: list = field(default_factory=list)   # (dst id, payload)
    halt: bool = False


class NodeProgram:
    """Base class; subclasses override step().

    step(round_no, local_inbox, global_inbox) -> Step
      local_inbox   dict neighbor -> payload
      global_inbox  list of (src, payload), sorted by src
    """

    def __init__(self, node_id, n):
        self.node_id = node_id
        self.n = n

    def step(self, round_no, local_inbox, global_inbox):
        return Step(halt=True)


@dataclass
class RoundLedger:
    """Per-run accounting: every delivered message, every drop, plus totals."""

    model: str
    n: int
    msg_factor: int = DEFAULT_MSG_FACTOR
    ncc_cap: int = 0
    seed: int = 0
    rounds: int = 0
    records: list = field(default_factory=list)   # (round, channel, src, dst, words)
    drops: list = field(default_factory=list)     # (round, channel, src, dst, reason)
    payloads: list = field(default_factory=list)  # (round, channel, src, dst, payload)
    record_payloads: bool = True

    @property
    def bits_per_word(self):
        return word_bits(self.n)

    def log(self, rnd, channel, src, dst, words, payload):
        self.records.append((rnd, channel, src, dst, words))
        if self.record_payloads:
            self.payloads.append((rnd, channel, src, dst, payload))

    def log_drop(self, rnd, channel, src, dst, reason):
        self.drops.append((rnd, channel, src, dst, reason))

    def message_count(self, channel=None):
        if channel is None:
            return len(self.records)
        return sum(1 for r in self.records if r[1] == channel)

    def bit_count(self, channel=None):
        bpw = self.bits_per_word
        return sum(r[4] * bpw for r in self.records
                   if channel is None or r[1] == channel)

    def edge_message_counts(self):
        """Directed (src, dst) -> total local messages, for congestion checks."""
        out = {}
        for (rnd, channel, src, dst, words) in self.records:
            if channel != "local":
                continue
            key = (src, dst)
            out[key] = out.get(key, 0) + 1
        return out

    def delivered_multiset(self):
        """Multiset of delivered (round, channel, src, dst, payload) for replay checks."""
        if not self.record_payloads:
            raise ValueError("payload recording was disabled for this run")
        return sorted(self.payloads)

    def summary(self):
        return {
            "model": self.model,
            "n": self.n,
            "rounds": self.rounds,
            "msg_factor": self.msg_factor,
            "word_bits": self.bits_per_word,
            "ncc_cap": self.ncc_cap,
            "seed": self.seed,
            "msgs_local": self.message_count("local"),
            "msgs_global": self.message_count("global"),
            "bits_local": self.bit_count("local"),
            "bits_global": self.bit_count("global"),
            "drops": len(self.drops),
        }

    def export_csv(self, path):
        bpw = self.bits_per_word
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "channel", "src", "dst", "bits"])
            for (rnd, channel, src, dst, words) in self.records:
                writer.writerow([rnd, channel, src, dst, words * bpw])

    def export_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _neighbor_sets(graph):
    sets = []
    for u in range(graph.n):
        nbrs = set()
        for (v, _w, _e) in graph.neighbors(u):
            if v == u:
                raise ProgramError("simulation host graph must be loop-free")
            if v in nbrs:
                raise ProgramError("simulation host graph must be simple")
            nbrs.add(v)
        sets.append(nbrs)
    return sets


def run_network(graph, programs, model, *, seed=0, max_rounds=100_000,
                msg_factor=DEFAULT_MSG_FACTOR, ncc_cap_factor=DEFAULT_NCC_CAP_FACTOR,
                drop_policy="random", record_payloads=True,
                deadlock_patience=4096):
    """Drive ``programs`` (one per node) to completion under the given model.

    Returns the RoundLedger; program objects hold whatever outputs the
    protocol computed.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if drop_policy not in DROP_POLICIES:
        raise ValueError(f"unknown drop policy {drop_policy!r}")
    n = graph.n
    if len(programs) != n:
        raise ValueError("need exactly one program per node")
    use_local = model in ("congest", "hybrid")
    use_global = model in ("ncc", "hybrid")
    nbr_sets = _neighbor_sets(graph) if use_local else None
    cap = ncc_cap_factor * word_bits(n) if use_global else 0
    ledger = RoundLedger(model=model, n=n, msg_factor=msg_factor, ncc_cap=cap,
                         seed=seed, record_payloads=record_payloads)
    rng = np.random.default_rng(seed)

    halted = [False] * n
    local_in = [dict() for _ in range(n)]
    global_in = [[] for _ in range(n)]
    idle_phases = 0

    for phase in range(max_rounds + 1):
        pending_local = []   # (src, dst, payload, words)
        pending_global = []
        for u in range(n):
            if halted[u]:
                continue
            inbox_l = dict(sorted(local_in[u].items()))
            inbox_g = sorted(global_in[u], key=lambda t: t[0])
            result = programs[u].step(phase, inbox_l, inbox_g)
            if result is None:
                result = Step()
            if result.local:
                if not use_local:
                    raise ProgramError(f"node {u} used the local channel under {model}")
                for dst, msg in result.local.items():
                    if dst not in nbr_sets[u]:
                        raise ProgramError(f"node {u} sent locally to non-neighbor {dst}")
                    payload = _as_payload(msg)
                    words = payload_words(payload, ledger.bits_per_word)
                    if words > msg_factor:
                        raise ProgramError(
                            f"node {u} local message needs {words} words > {msg_factor}")
                    pending_local.append((u, dst, payload, words))
            if result.global_:
                if not use_global:
                    raise ProgramError(f"node {u} used the global channel under {model}")
                if len(result.global_) > cap:
                    raise ProgramError(
                        f"node {u} sent {len(result.global_)} global messages > cap {cap}")
                for dst, msg in result.global_:
                    if not (0 <= dst < n):
                        raise ProgramError(f"node {u} sent globally to bad id {dst}")
                    payload = _as_payload(msg)
                    words = payload_words(payload, ledger.bits_per_word)
                    if words > msg_factor:
                        raise ProgramError(
                            f"node {u} global message needs {words} words > {msg_factor}")
                    pending_global.append((u, dst, payload, words))
            if result.halt:
                halted[u] = True

        in_flight = bool(pending_local or pending_global)
        if all(halted) and not in_flight:
            # late messages already delivered to halted nodes simply went unread
            ledger.rounds = max(0, phase)
            return ledger
        if not in_flight and not all(halted):
            idle_phases += 1
            if idle_phases > deadlock_patience:
                err = DeadlockError(
                    f"no traffic and no halt for {deadlock_patience} phases")
                err.rounds = ledger.rounds
                raise err
        else:
            idle_phases = 0

        local_in = [dict() for _ in range(n)]
        global_in = [[] for _ in range(n)]
        next_round = phase + 1
        for (src, dst, payload, words) in pending_local:
            if dst in local_in and src in local_in[dst]:
                pass
            if src in local_in[dst]:
                raise ProgramError(f"duplicate local message {src}->{dst} in one round")
            local_in[dst][src] = payload
            ledger.log(next_round, "local", src, dst, words, payload)
        if pending_global:
            by_dst = {}
            for item in pending_global:
                by_dst.setdefault(item[1], []).append(item)
            for dst, items in sorted(by_dst.items()):
                if len(items) > cap:
                    if drop_policy == "random":
                        order = rng.permutation(len(items))
                        kept_idx = sorted(order[:cap])
                    else:  # by-sender-id: lowest sender ids survive
                        order = sorted(range(len(items)), key=lambda i: items[i][0])
                        kept_idx = sorted(order[:cap])
                    kept = set(kept_idx)
                    for i, (src, d, payload, words) in enumerate(items):
                        if i in kept:
                            global_in[dst].append((src, payload))
                            ledger.log(next_round, "global", src, dst, words, payload)
                        else:
                            ledger.log_drop(next_round, "global", src, dst, "recv-cap")
                else:
                    for (src, d, payload, words) in items:
                        global_in[dst].append((src, payload))
                        ledger.log(next_round, "global", src, dst, words, payload)

    raise RoundLimitError(f"exceeded max_rounds={max_rounds}")


def run_congest(graph, programs, **kw):
    return run_network(graph, programs, "congest", **kw)


def run_ncc(graph, programs, **kw):
    return run_network(graph, programs, "ncc", **kw)


def run_hybrid(graph, programs, **kw):
    return run_network(graph, programs, "hybrid", **kw)
