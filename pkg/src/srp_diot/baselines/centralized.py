"""A single registry node that every holder registers with and every query asks."""

from __future__ import annotations

import numpy as np

from ..protocol import HEADER_BYTES, PATH_ELEMENT_BYTES, QUERY_COUNTER_BYTES, REPLY_EXTRA_BYTES
from ..simnet.world import Driver, QueryRecord, SimWorld

REGISTRY_RECORD_BYTES = 4  # provider id stored next to each code


def registration_size(world: SimWorld, holder: int) -> int:
    return HEADER_BYTES + PATH_ELEMENT_BYTES + sum(c.nbytes for c in world.caps[holder])


def pick_registry(world: SimWorld) -> int:
    """The node nearest the centre of the area at time zero (lowest id on ties)."""
    pts = world.positions[0]
    c = world.side / 2.0
    d = np.hypot(pts[:, 0] - c, pts[:, 1] - c)
    return int(np.argmin(d))


class CentralizedDriver(Driver):
    def __init__(self, world: SimWorld):
        super().__init__(world)
        self.registry = pick_registry(world)
        self.holders = [i for i in range(world.n) if world.caps[i]]
        self.known = [frozenset(world.neighbors[i]) for i in range(world.n)]
        self.registrations = 0

    def bootstrap(self, rounds: int) -> None:
        # initial registrations happen before measurement and are free
        self.registrations = len(self.holders)

    def on_topology(self, changed: set[int]) -> None:
        """Holders whose neighbourhood changed re-register over the current shortest path."""
        w = self.world
        dist = None
        for i in sorted(changed):
            if not w.caps[i] or w.neighbors[i] == self.known[i]:
                self.known[i] = w.neighbors[i]
                continue
            self.known[i] = w.neighbors[i]
            if i == self.registry:
                continue
            if dist is None:
                dist = w.distances_from(self.registry)
            d = int(dist[i])
            if d > 0:
                w.charge("register", registration_size(w, i) * d, d)
                self.registrations += 1

    def issue(self, rec: QueryRecord) -> None:
        w = self.world
        d = w.distance(rec.source, self.registry)
        if d is None:
            w.finish(rec, False, 0, reason="registry unreachable")
            return
        ask = HEADER_BYTES + rec.target.nbytes + QUERY_COUNTER_BYTES + PATH_ELEMENT_BYTES
        answer = HEADER_BYTES + rec.target.nbytes + REPLY_EXTRA_BYTES * len(w.holders[rec.target])
        w.charge("query", ask * d, d)
        w.charge("reply", answer * d, d)
        w.finish(rec, True, 2 * d, w.holders[rec.target][0])

    def table_bytes(self) -> list[int]:
        w = self.world
        size = sum(c.nbytes + REGISTRY_RECORD_BYTES for cs in w.caps for c in cs)
        out = [0] * w.n
        out[self.registry] = size
        return out

    def extra_stats(self) -> dict[str, object]:
        return {"registry": self.registry, "registrations": self.registrations}
