"""Hand-placed static worlds for driver tests."""

from __future__ import annotations

import warnings

import numpy as np

from srp_diot.simnet import SimConfig, SimWorld
from srp_diot.simnet.world import QueryRecord, make_driver, step


def placed_world(points, caps, tree, protocol="flooding", bootstrap=0, **cfg) -> SimWorld:
    """A static world with nodes at ``points`` and ``caps`` as {node: onid}."""
    n = len(points)
    pts = np.asarray(points, dtype=float)
    side = float(pts.max()) + 1.0 if n else 1.0
    config = SimConfig(nodes=n, area=side, protocol=protocol, duration=0, drain=0, bootstrap_rounds=bootstrap, **cfg)
    with warnings.catch_warnings():
        # hand-placed layouts are sparse by design
        warnings.simplefilter("ignore", UserWarning)
        w = SimWorld(config, tree)
    w.positions = np.broadcast_to(pts, (w.total_periods, n, 2)).copy()
    w.caps = [frozenset([caps[i]]) if i in caps else frozenset() for i in range(n)]
    w.holders = {}
    for i, o in caps.items():
        w.holders.setdefault(o, []).append(i)
    w._refresh_neighbors()
    w.driver = make_driver(w)
    w.driver.bootstrap(bootstrap)
    w.phase = "measure"
    w.driver.start()
    return w


def line_points(n, gap=90.0):
    return [(10.0 + gap * i, 10.0) for i in range(n)]


def ask(world: SimWorld, source: int, target, limit: int = 500) -> QueryRecord:
    """Issue one query now and step the world until it resolves."""
    rec = QueryRecord(len(world.stats.queries), source, target, world.t, True)
    world.stats.queries.append(rec)
    world.pending[rec.qid] = rec
    world.driver.issue(rec)
    for _ in range(limit):
        if rec.outcome != "pending":
            break
        step(world)
    return rec


def settle(world: SimWorld, periods: int) -> None:
    for _ in range(periods):
        step(world)


def bfs(adj, src):
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def brute_adjacency(points, reach):
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    return [
        {j for j in range(n) if j != i and np.hypot(*(pts[i] - pts[j])) <= reach}
        for i in range(n)
    ]

