"""Event-loop driver for the semantic routing protocol and its table-driven variant."""

from __future__ import annotations

import random
from dataclasses import replace

from ..protocol import Backtrack, Fail, Forward, Found, Query, advertise, bounce, hello, issue_query, make_node, on_advertisement, on_query
from .world import Driver, Message, QueryRecord, SimWorld


class SrpDriver(Driver):
    """Runs one protocol node per simulated node.

    With ``summarize=False`` this is the table-driven comparison variant: the
    same advertisements and lookup, but an over-budget table is trimmed by
    evicting the lowest-utility routes, and stability is ignored.
    """

    def __init__(self, world: SimWorld, summarize: bool = True):
        super().__init__(world)
        cfg = world.config
        params = cfg.utility if summarize else replace(cfg.utility, use_stability=False)
        tree = world.tree
        plan_of = world.plan_of if cfg.mobile else None
        self.nodes = []
        for i in range(world.n):
            node = make_node(
                i, world.caps[i], tree.onid_width_bits, cfg.rtb_bytes, params,
                tree.avg_degree, tree.avg_sparseness,
                plan_of=plan_of, rng=random.Random(world.node_seed(i)), ttl=cfg.ttl, rf_budget=cfg.rf_budget,
            )
            node.table.summarize = summarize
            node.table.max_hop = cfg.max_hop or None
            if cfg.holddown:
                node.table.holddown = -(-cfg.holddown // cfg.usage_period)
            node.table.set_neighbors(world.neighbors[i])
            self.nodes.append(node)
        self.records: dict[int, QueryRecord] = {}
        self.lost_backtracks = 0
        self.relayed_backtracks = 0
        self.bootstrap_rounds_used = 0

    # --- advertisements ---------------------------------------------------
    def bootstrap(self, rounds: int) -> None:
        """Synchronous advertisement rounds on the initial topology, before the clock starts.

        Stops early once a round leaves every advertisement unchanged.
        """
        last: list = [None] * len(self.nodes)
        for _ in range(rounds):
            self.bootstrap_rounds_used += 1
            out = []
            quiet = True
            for node in self.nodes:
                msgs = advertise(node)
                if msgs:
                    entries = msgs[0][1].entries
                    if entries != last[node.node_id]:
                        quiet = False
                        last[node.node_id] = entries
                out.extend(msgs)
            if quiet:
                break
            for dst, msg in out:
                on_advertisement(self.nodes[dst], msg)

    def start(self) -> None:
        w = self.world
        a = w.config.a_interval
        phase = random.Random(w.config.seed).choices(range(a), k=w.n)
        for i in range(w.n):
            w.schedule(phase[i], self._advertise, i)
        w.schedule(w.config.usage_period, self._usage_tick)

    def _advertise(self, i: int) -> None:
        w = self.world
        for dst, msg in advertise(self.nodes[i]):
            w.send(i, dst, "adv", msg, msg.size_bytes, "adv")
        w.schedule(w.t + w.config.a_interval, self._advertise, i)

    def _usage_tick(self) -> None:
        for node in self.nodes:
            node.table.usage_tick()
        self.world.schedule(self.world.t + self.world.config.usage_period, self._usage_tick)

    def on_topology(self, changed: set[int]) -> None:
        w = self.world
        for i in changed:
            node = self.nodes[i]
            met = w.neighbors[i] - node.table.neighbors
            node.table.set_neighbors(w.neighbors[i])
            msg = hello(node) if met else None
            if msg is not None:
                for dst in sorted(met):
                    w.send(i, dst, "hello", msg, msg.size_bytes, "adv")

    # --- queries ----------------------------------------------------------
    def issue(self, rec: QueryRecord) -> None:
        q = issue_query(self.nodes[rec.source], rec.target, rec.qid)
        self.records[rec.qid] = rec
        self._handle(rec.source, q)

    def _handle(self, at: int, q: Query) -> None:
        w = self.world
        rec = self.records[q.qid]
        out = on_query(self.nodes[at], q)
        if isinstance(out, Found):
            # the answer retraces the current route to the source
            w.charge("reply", q.reply_size() * (len(q.stack) - 1), len(q.stack) - 1)
            w.finish(rec, True, q.hops_taken, at)
        elif isinstance(out, Forward):
            w.send(at, out.next_hop, "query", (out.query, "forward"), out.query.wire_size, "query")
        elif isinstance(out, Backtrack):
            w.send(at, out.prev, "query", (out.query, "back"), out.query.wire_size, "query")
        else:
            w.finish(rec, False, q.hops_taken, reason=out.reason)
        if rec.outcome != "pending":
            self.records.pop(q.qid, None)

    def on_message(self, msg: Message) -> None:
        if msg.kind == "adv":
            on_advertisement(self.nodes[msg.dst], msg.payload)
        elif msg.kind == "hello":
            on_advertisement(self.nodes[msg.dst], msg.payload, complete=False)
        elif msg.payload[0].qid in self.records:
            self._handle(msg.dst, msg.payload[0])

    def on_drop(self, msg: Message) -> None:
        if msg.kind in ("adv", "hello"):
            self.nodes[msg.dst].dropped_ads += 1
            return
        q, mode = msg.payload
        if q.qid not in self.records:
            return
        if mode == "forward":
            # the sender still holds the query and tries its next option
            self._handle(msg.src, bounce(q))
        else:
            # the previous hop moved away: relay the query back to it over the
            # current shortest path, or fail when it is out of reach
            w = self.world
            d = w.distance(msg.src, msg.dst)
            if d is None:
                self.lost_backtracks += 1
                w.finish(self.records.pop(q.qid), False, q.hops_taken, reason="backtrack target unreachable")
                return
            self.relayed_backtracks += 1
            w.charge("query", msg.nbytes * d, d)
            w.schedule(w.t + d, self._relay_arrive, msg.dst, replace(q, hops_taken=q.hops_taken + d - 1))

    def _relay_arrive(self, at: int, q: Query) -> None:
        if q.qid in self.records:
            self._handle(at, q)

    def table_bytes(self) -> list[int]:
        return [n.table.size_bytes for n in self.nodes]

    def extra_stats(self) -> dict[str, object]:
        tabs = [n.table for n in self.nodes]
        return {
            "bootstrap": self.bootstrap_rounds_used,
            "summaries": sum(t.summarization_runs for t in tabs),
            "evicted": sum(t.evicted_tuples for t in tabs),
            "lost_back": self.lost_backtracks,
            "relayed_back": self.relayed_backtracks,
        }
