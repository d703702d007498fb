"""Chord-style ring: capabilities hashed onto node ids, lookups over finger tables."""

from __future__ import annotations

import hashlib
from bisect import bisect_left

from ..ontology import Onid
from ..protocol import HEADER_BYTES, PATH_ELEMENT_BYTES, QUERY_COUNTER_BYTES, REPLY_EXTRA_BYTES
from ..simnet.world import Driver, QueryRecord, SimWorld

FINGER_BYTES = 6  # ring position and node address


def ring_hash(text: str, bits: int) -> int:
    return int.from_bytes(hashlib.sha1(text.encode()).digest(), "big") % (1 << bits)


def capability_key(onid: Onid, bits: int) -> int:
    return ring_hash(f"cap:{onid.id_hex}:{onid.sp_hex}", bits)


def in_half_open(x: int, a: int, b: int) -> bool:
    """x in the ring interval (a, b]."""
    if a < b:
        return a < x <= b
    return x > a or x <= b


class Ring:
    """Static ring over ``n`` members; colliding hashes probe to the next free id."""

    def __init__(self, n: int, bits: int):
        if n > (1 << bits):
            raise ValueError(f"a {bits}-bit ring cannot hold {n} nodes")
        self.bits = bits
        size = 1 << bits
        taken: dict[int, int] = {}
        self.ids = []
        for node in range(n):
            r = ring_hash(f"node:{node}", bits)
            while r in taken:
                r = (r + 1) % size
            taken[r] = node
            self.ids.append(r)
        self.sorted_ids = sorted(taken)
        self.owner = taken
        self.fingers = [[self.successor((r + (1 << k)) % size) for k in range(bits)] for r in self.ids]

    def successor(self, key: int) -> int:
        """Node responsible for ``key``: the first member at or after it."""
        i = bisect_left(self.sorted_ids, key)
        return self.owner[self.sorted_ids[i % len(self.sorted_ids)]]

    def next_node(self, node: int) -> int:
        return self.fingers[node][0]

    def lookup_path(self, start: int, key: int) -> list[int]:
        """Overlay nodes visited from ``start`` to the node storing ``key``."""
        path = [start]
        cur = start
        if self.successor(key) == start:
            return path
        while True:
            nxt = self.next_node(cur)
            if in_half_open(key, self.ids[cur], self.ids[nxt]):
                path.append(nxt)
                return path
            hop = cur
            for f in reversed(self.fingers[cur]):
                # closest finger strictly between us and the key
                if f != cur and in_half_open(self.ids[f], self.ids[cur], key) and self.ids[f] != key:
                    hop = f
                    break
            if hop == cur:
                path.append(nxt)
                return path
            path.append(hop)
            cur = hop


class ChordDriver(Driver):
    def __init__(self, world: SimWorld):
        super().__init__(world)
        bits = world.config.baseline.chord_ring_bits
        self.ring = Ring(world.n, bits)
        self.store: dict[int, dict[Onid, list[int]]] = {}
        for node, cs in enumerate(world.caps):
            for c in cs:
                home = self.ring.successor(capability_key(c, bits))
                self.store.setdefault(home, {}).setdefault(c, []).append(node)
        self.overlay_hops: list[int] = []

    def providers(self, onid: Onid) -> list[int]:
        home = self.ring.successor(capability_key(onid, self.ring.bits))
        return self.store.get(home, {}).get(onid, [])

    def start(self) -> None:
        self.world.schedule(self.world.config.baseline.chord_stabilize_interval, self._stabilize)

    def _stabilize(self) -> None:
        """Every member checks its successor: one request and one answer."""
        w = self.world
        size = HEADER_BYTES + 2 * PATH_ELEMENT_BYTES
        for node in range(w.n):
            succ = self.ring.next_node(node)
            if succ == node:
                continue
            d = w.distance(node, succ)
            if d:
                w.charge("maintenance", 2 * size * d, 2 * d)
        w.schedule(w.t + w.config.baseline.chord_stabilize_interval, self._stabilize)

    def issue(self, rec: QueryRecord) -> None:
        w = self.world
        key = capability_key(rec.target, self.ring.bits)
        path = self.ring.lookup_path(rec.source, key)
        ask = HEADER_BYTES + rec.target.nbytes + QUERY_COUNTER_BYTES + PATH_ELEMENT_BYTES
        hops = 0
        for a, b in zip(path, path[1:]):
            d = w.distance(a, b)
            if d is None:
                w.finish(rec, False, hops, reason="overlay hop unreachable")
                return
            w.charge("query", ask * d, d)
            hops += d
        home = path[-1]
        provs = self.store.get(home, {}).get(rec.target, [])
        back = w.distance(home, rec.source)
        if back is None or not provs:
            w.finish(rec, False, hops, reason="answer undeliverable" if provs else "not stored")
            return
        answer = HEADER_BYTES + rec.target.nbytes + REPLY_EXTRA_BYTES * len(provs)
        w.charge("reply", answer * back, back)
        self.overlay_hops.append(len(path) - 1)
        # the source takes the provider closest to it
        dist = w.distances_from(rec.source)
        best = min(provs, key=lambda p: (dist[p] < 0, dist[p], p))
        w.finish(rec, True, hops + back, best)

    def table_bytes(self) -> list[int]:
        fingers = self.ring.bits * FINGER_BYTES
        out = []
        for node in range(self.world.n):
            held = self.store.get(node, {})
            out.append(fingers + sum(c.nbytes + REPLY_EXTRA_BYTES * len(p) for c, p in held.items()))
        return out

    def extra_stats(self) -> dict[str, object]:
        oh = self.overlay_hops
        return {"overlay_hops": round(sum(oh) / len(oh), 3) if oh else 0.0}
