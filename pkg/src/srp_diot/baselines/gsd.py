"""Group-based caching discovery: scoped advertisements, group hints and local floods."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from ..ontology import Onid
from ..protocol import HEADER_BYTES, Query, advance, bounce
from ..simnet.world import Message, QueryRecord, SimWorld
from .flooding import FloodRelay

GROUP_HOP_CEILING = 16


def ad_entry_bytes(width_bits: int) -> int:
    # code, hop count, kind flag
    return 2 * width_bits // 8 + 2


def cache_entry_bytes(width_bits: int) -> int:
    # code, next hop id, hop count, kind, 2-byte timestamp
    return 2 * width_bits // 8 + 8


@dataclass
class CacheEntry:
    next_hop: int
    hop: int
    stamp: int


class GsdCache:
    """Capability and group entries under one byte budget; overflow flushes the oldest."""

    def __init__(self, width_bits: int, budget: int):
        self.entry_bytes = cache_entry_bytes(width_bits)
        self.budget = budget
        self.caps: dict[Onid, CacheEntry] = {}
        self.groups: dict[Onid, CacheEntry] = {}
        self.flushed = 0

    @property
    def size_bytes(self) -> int:
        return (len(self.caps) + len(self.groups)) * self.entry_bytes

    def offer(self, table: dict[Onid, CacheEntry], onid: Onid, via: int, hop: int, now: int) -> bool:
        """Store or refresh a route; True when the route itself changed."""
        cur = table.get(onid)
        if cur is None or cur.next_hop == via or hop <= cur.hop:
            changed = cur is None or cur.next_hop != via or cur.hop != hop
            table[onid] = CacheEntry(via, hop, now)
            if changed and self.size_bytes > self.budget:
                self._fit()
            return changed
        return False

    def _fit(self) -> None:
        while self.size_bytes > self.budget and (self.caps or self.groups):
            oldest = None
            for table in (self.caps, self.groups):
                for onid, e in table.items():
                    if oldest is None or e.stamp < oldest[2].stamp:
                        oldest = (table, onid, e)
            del oldest[0][oldest[1]]
            self.flushed += 1

    def expire(self, before: int) -> None:
        for table in (self.caps, self.groups):
            for onid in [o for o, e in table.items() if e.stamp < before]:
                del table[onid]

    def drop_neighbors(self, gone: set[int]) -> None:
        for table in (self.caps, self.groups):
            for onid in [o for o, e in table.items() if e.next_hop in gone]:
                del table[onid]


@dataclass(frozen=True)
class GsdAd:
    sender: int
    caps: tuple[tuple[Onid, int], ...]
    groups: tuple[tuple[Onid, int], ...]
    nbytes: int


def group_of(onid: Onid, depth: int) -> Onid:
    return onid.ancestor_at_depth(depth) if onid.depth > depth else onid


class GsdDriver(FloodRelay):
    def __init__(self, world: SimWorld):
        super().__init__(world)
        cfg = world.config
        self.radius = cfg.baseline.gsd_cache_hops
        self.group_depth = cfg.baseline.gsd_group_depth
        self.width = world.tree.onid_width_bits
        self.caches = [GsdCache(self.width, cfg.rtb_bytes) for _ in range(world.n)]
        self.own_groups = [
            frozenset(group_of(c, self.group_depth) for c in world.caps[i]) for i in range(world.n)
        ]
        self.known = [set(world.neighbors[i]) for i in range(world.n)]
        self.records: dict[int, QueryRecord] = {}
        self.flooded: set[tuple[int, int]] = set()
        self.floods_started = 0
        self.global_floods = 0

    # --- advertisements ---------------------------------------------------
    def _build_ad(self, i: int) -> GsdAd:
        c = self.caches[i]
        caps = [(o, 0) for o in self.world.caps[i]]
        caps += [(o, e.hop) for o, e in c.caps.items() if e.hop < self.radius]
        groups = [(g, 0) for g in self.own_groups[i]]
        groups += [(g, e.hop) for g, e in c.groups.items() if e.hop < GROUP_HOP_CEILING and g not in self.own_groups[i]]
        nbytes = HEADER_BYTES + (len(caps) + len(groups)) * ad_entry_bytes(self.width)
        return GsdAd(i, tuple(caps), tuple(groups), nbytes)

    def _receive(self, i: int, ad: GsdAd) -> bool:
        c = self.caches[i]
        now = self.world.t
        own = self.world.caps[i]
        changed = False
        for onid, hop in ad.caps:
            if onid not in own and hop + 1 <= self.radius:
                changed |= c.offer(c.caps, onid, ad.sender, hop + 1, now)
        for g, hop in ad.groups:
            if g not in self.own_groups[i]:
                changed |= c.offer(c.groups, g, ad.sender, hop + 1, now)
        return changed

    def bootstrap(self, rounds: int) -> None:
        for _ in range(rounds):
            ads = [self._build_ad(i) for i in range(self.world.n)]
            changed = False
            for i, ad in enumerate(ads):
                for n in sorted(self.world.neighbors[i]):
                    changed |= self._receive(n, ad)
            if not changed:
                break

    def start(self) -> None:
        w = self.world
        a = w.config.a_interval
        phase = random.Random(w.config.seed).choices(range(a), k=w.n)
        for i in range(w.n):
            w.schedule(phase[i], self._advertise, i)

    def _advertise(self, i: int) -> None:
        w = self.world
        # entries not refreshed for two rounds are presumed gone
        self.caches[i].expire(w.t - 2 * w.config.a_interval)
        nbrs = w.neighbors[i]
        if nbrs:
            ad = self._build_ad(i)
            for n in sorted(nbrs):
                w.send(i, n, "adv", ad, ad.nbytes, "adv")
        w.schedule(w.t + w.config.a_interval, self._advertise, i)

    def on_topology(self, changed: set[int]) -> None:
        for i in changed:
            gone = self.known[i] - self.world.neighbors[i]
            if gone:
                self.caches[i].drop_neighbors(gone)
            self.known[i] = set(self.world.neighbors[i])

    # --- queries ----------------------------------------------------------
    def issue(self, rec: QueryRecord) -> None:
        cfg = self.world.config
        self.records[rec.qid] = rec
        s = rec.source
        self._handle(s, Query(rec.qid, rec.target, s, cfg.ttl, 0, (s,), (s,)))

    def _handle(self, at: int, q: Query) -> None:
        w = self.world
        rec = self.records.get(q.qid)
        if rec is None:
            return
        if q.cpb in w.caps[at]:
            w.charge("reply", q.reply_size() * (len(q.stack) - 1), len(q.stack) - 1)
            self._close(rec, True, q.hops_taken, at)
            return
        if q.ttl <= 0:
            self._close(rec, False, q.hops_taken, reason="ttl exhausted")
            return
        nbrs = w.neighbors[at]
        visited = set(q.path)
        cache = self.caches[at]
        for table, key in ((cache.caps, q.cpb), (cache.groups, group_of(q.cpb, self.group_depth))):
            e = table.get(key)
            if e is not None and e.next_hop in nbrs and e.next_hop not in visited:
                self._send(at, e.next_hop, advance(q, e.next_hop), "forward")
                return
        if (q.qid, at) not in self.flooded:
            self.flooded.add((q.qid, at))
            self.floods_started += 1
            self._local_flood(at, q, rec)
            return
        self._backtrack(at, q, rec)

    def _local_flood(self, at: int, q: Query, rec: QueryRecord) -> None:
        w = self.world

        def hit(node: int, depth: int) -> None:
            back = depth + len(q.stack) - 1
            w.charge("reply", q.reply_size() * back, back)
            if rec.outcome == "pending":
                self._close(rec, True, q.hops_taken + depth, node)

        def done() -> None:
            if rec.outcome == "pending":
                self._backtrack(at, q, rec)

        self.start_flood(at, q.cpb, self.radius, hit, done)

    def _global_flood(self, at: int, q: Query, rec: QueryRecord) -> None:
        """Last resort once the directed search is back at the source empty-handed."""
        w = self.world
        self.global_floods += 1

        def hit(node: int, depth: int) -> None:
            w.charge("reply", q.reply_size() * depth, depth)
            if rec.outcome == "pending":
                self._close(rec, True, q.hops_taken + depth, node)

        def done() -> None:
            if rec.outcome == "pending":
                self._close(rec, False, q.hops_taken, reason="not found by network-wide flood")

        self.start_flood(at, q.cpb, w.n, hit, done)

    def _backtrack(self, at: int, q: Query, rec: QueryRecord) -> None:
        if len(q.stack) == 1:
            self._global_flood(at, q, rec)
            return
        prev = q.stack[-2]
        q2 = replace(q, stack=q.stack[:-1], hops_taken=q.hops_taken + 1, backtracks=q.backtracks + 1)
        self._send(at, prev, q2, "back")

    def _send(self, src: int, dst: int, q: Query, mode: str) -> None:
        self.world.send(src, dst, "query", (q, mode), q.wire_size, "query")

    def _close(self, rec: QueryRecord, found: bool, hops: int, provider: int | None = None, reason: str = "") -> None:
        self.world.finish(rec, found, hops, provider, reason)
        self.records.pop(rec.qid, None)

    def on_message(self, msg: Message) -> None:
        if msg.kind == "adv":
            self._receive(msg.dst, msg.payload)
        elif msg.kind == "query":
            self._handle(msg.dst, msg.payload[0])
        else:
            super().on_message(msg)

    def on_drop(self, msg: Message) -> None:
        if msg.kind != "query":
            super().on_drop(msg)
            return
        q, mode = msg.payload
        rec = self.records.get(q.qid)
        if rec is None:
            return
        if mode == "forward":
            self._handle(msg.src, bounce(q))
            return
        w = self.world
        d = w.distance(msg.src, msg.dst)
        if d is None:
            self._close(rec, False, q.hops_taken, reason="backtrack target unreachable")
            return
        w.charge("query", msg.nbytes * d, d)
        w.schedule(w.t + d, self._handle, msg.dst, replace(q, hops_taken=q.hops_taken + d - 1))

    def table_bytes(self) -> list[int]:
        return [c.size_bytes for c in self.caches]

    def extra_stats(self) -> dict[str, object]:
        return {"floods": self.floods_started, "global_floods": self.global_floods, "flushed": sum(c.flushed for c in self.caches)}
