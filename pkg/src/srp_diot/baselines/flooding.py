"""Controlled flooding with per-query duplicate suppression and a hop limit."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable

from ..ontology import Onid, OntologyTree
from ..protocol import HEADER_BYTES, PATH_ELEMENT_BYTES, QUERY_COUNTER_BYTES, REPLY_EXTRA_BYTES
from ..simnet.config import SimConfig
from ..simnet.world import Driver, Message, QueryRecord, SimWorld, build_world, run_world

CALIBRATION_SEED_OFFSET = 7919


def flood_message_size(cpb: Onid) -> int:
    return HEADER_BYTES + cpb.nbytes + QUERY_COUNTER_BYTES + PATH_ELEMENT_BYTES


def reply_size(cpb: Onid) -> int:
    return HEADER_BYTES + cpb.nbytes + REPLY_EXTRA_BYTES


class Flood:
    """One scoped broadcast travelling hop by hop through the world.

    Every node forwards a copy once, to all neighbours except the one it
    heard it from.  Holders of the target answer and stop forwarding.
    ``on_hit(node, depth)`` runs for every holder reached; ``on_done()`` runs
    when the last copy has been delivered or lost.
    """

    def __init__(
        self,
        world: SimWorld,
        fid: int,
        origin: int,
        target: Onid,
        limit: int,
        on_hit: Callable[[int, int], None],
        on_done: Callable[[], None],
    ):
        self.world = world
        self.fid = fid
        self.target = target
        self.limit = limit
        self.on_hit = on_hit
        self.on_done = on_done
        self.seen = {origin}
        self.inflight = 0
        self.messages = 0
        self.nbytes = flood_message_size(target)
        self._fan_out(origin, None, 0)
        if self.inflight == 0:
            on_done()

    def _fan_out(self, node: int, came_from: int | None, depth: int) -> None:
        if depth >= self.limit:
            return
        for n in sorted(self.world.neighbors[node]):
            if n != came_from:
                self.inflight += 1
                self.messages += 1
                self.world.send(node, n, "flood", (self.fid, depth + 1), self.nbytes, "query")

    def deliver(self, msg: Message) -> None:
        self.inflight -= 1
        node = msg.dst
        if node not in self.seen:
            self.seen.add(node)
            depth = msg.payload[1]
            if self.target in self.world.caps[node]:
                self.on_hit(node, depth)
            else:
                self._fan_out(node, msg.src, depth)
        if self.inflight == 0:
            self.on_done()

    def lost(self, msg: Message) -> None:
        self.inflight -= 1
        if self.inflight == 0:
            self.on_done()


class FloodRelay(Driver):
    """Driver base that routes ``flood`` messages to their Flood objects."""

    def __init__(self, world: SimWorld):
        super().__init__(world)
        self.floods: dict[int, Flood] = {}
        self._fids = 0

    def start_flood(self, origin: int, target: Onid, limit: int, on_hit, on_done) -> Flood:
        fid = self._fids
        self._fids += 1

        def done():
            self.floods.pop(fid, None)
            on_done()

        f = Flood(self.world, fid, origin, target, limit, on_hit, done)
        if f.inflight:
            self.floods[fid] = f
        return f

    def on_message(self, msg: Message) -> None:
        if msg.kind == "flood":
            f = self.floods.get(msg.payload[0])
            if f is not None:
                f.deliver(msg)

    def on_drop(self, msg: Message) -> None:
        if msg.kind == "flood":
            f = self.floods.get(msg.payload[0])
            if f is not None:
                f.lost(msg)


class FloodingDriver(FloodRelay):
    def __init__(self, world: SimWorld, hop_limit: int | None = None):
        super().__init__(world)
        if hop_limit is None:
            hop_limit = world.config.baseline.flood_hop_limit or world.n
        if hop_limit < 1:
            raise ValueError("hop_limit must be >= 1")
        self.hop_limit = hop_limit
        self.first_hits: list[int] = []

    def issue(self, rec: QueryRecord) -> None:
        w = self.world
        if rec.target in w.caps[rec.source]:
            w.finish(rec, True, 0, rec.source)
            return
        rsize = reply_size(rec.target)

        def hit(node: int, depth: int) -> None:
            # every holder reached answers along the reverse path
            w.charge("reply", rsize * depth, depth)
            if rec.outcome == "pending":
                self.first_hits.append(depth)
                w.finish(rec, True, depth, node)

        def done() -> None:
            w.finish(rec, False, 0, reason="hop limit reached")

        self.start_flood(rec.source, rec.target, self.hop_limit, hit, done)

    def extra_stats(self) -> dict[str, object]:
        return {"hop_limit": self.hop_limit}


def choose_hop_limit(first_hits: list[int], target: float) -> int:
    """Smallest limit that still catches ``target`` of the successful first hits."""
    if not first_hits:
        return 1
    need = math.ceil(target * len(first_hits) - 1e-9)
    s = sorted(first_hits)
    return max(1, s[need - 1])


def calibrate_hop_limit(config: SimConfig, ontology: OntologyTree | None = None) -> SimConfig:
    """Pick the flooding hop limit from an unlimited run on a shifted seed."""
    probe = replace(
        config,
        seed=config.seed + CALIBRATION_SEED_OFFSET,
        baseline=replace(config.baseline, flood_hop_limit=config.nodes),
    )
    world = build_world(probe, ontology)
    run_world(world)
    limit = choose_hop_limit(world.driver.first_hits, config.baseline.flood_target_success)
    return replace(config, baseline=replace(config.baseline, flood_hop_limit=limit))
