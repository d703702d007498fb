"""Discrete-event world: geometry, clock, message delivery and statistics."""

from __future__ import annotations

import csv
import gc
import heapq
import io
import itertools
import logging
import math
import warnings
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from ..metrics import MobilityPlan
from ..ontology import Onid, OntologyTree, generate_ontology, read_ontology_file
from .config import SimConfig
from .mobility import FIXED, assign_classes, random_waypoint, read_trace
from .workload import QueryStream, ZipfCatalog, assign_capabilities

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "protocol", "seed", "nodes", "ontology_leaves", "Q", "A", "RTB_bytes", "mobility_mix",
    "total_bytes", "adv_bytes", "query_bytes", "avg_query_hops", "p95_query_hops",
    "success_rate", "avg_rt_bytes",
)
# control traffic keeps routing state fresh; query traffic serves lookups
CONTROL_CLASSES = frozenset({"adv", "register", "maintenance"})
QUERY_CLASSES = frozenset({"query", "reply"})

_DELIVER, _CALL = 0, 1


@dataclass
class Message:
    src: int
    dst: int
    kind: str
    payload: object
    nbytes: int
    cls: str
    sent: int


@dataclass
class QueryRecord:
    qid: int
    source: int
    target: Onid
    issued: int
    reachable: bool
    outcome: str = "pending"
    provider: int | None = None
    hops: int = 0
    finished: int | None = None
    reason: str = ""


class StatsAccumulator:
    def __init__(self):
        self.bytes: Counter = Counter()
        self.messages: Counter = Counter()
        self.dropped: Counter = Counter()
        self.queries: list[QueryRecord] = []
        self.rt_samples: list[float] = []

    @property
    def issued(self) -> int:
        return len(self.queries)

    @property
    def found(self) -> int:
        return sum(q.outcome == "found" for q in self.queries)

    @property
    def success_rate(self) -> float:
        return self.found / self.issued if self.queries else 0.0

    @property
    def reachable_success_rate(self) -> float:
        reach = [q for q in self.queries if q.reachable]
        return sum(q.outcome == "found" for q in reach) / len(reach) if reach else 1.0

    def hops(self) -> list[int]:
        return [q.hops for q in self.queries if q.outcome == "found"]


@dataclass
class StatsReport:
    row: dict[str, object]
    stats: StatsAccumulator = field(repr=False)
    config: SimConfig = field(repr=False)
    extra: dict[str, object] = field(default_factory=dict)

    def summary(self) -> str:
        s = self.stats
        r = self.row
        lines = [
            f"protocol {r['protocol']}  seed {r['seed']}  nodes {r['nodes']}  mix {r['mobility_mix']}",
            f"  traffic   total {r['total_bytes']} B  (control {r['adv_bytes']} B, query {r['query_bytes']} B)",
            f"  queries   {s.issued} issued, {s.found} found, success {r['success_rate']}"
            f" (reachable {s.reachable_success_rate:.4f})",
            f"  hops      mean {r['avg_query_hops']}  p95 {r['p95_query_hops']}",
            f"  tables    mean {r['avg_rt_bytes']} B per node",
        ]
        for k, v in self.extra.items():
            lines.append(f"  {k:<9} {v}")
        return "\n".join(lines)


def load_ontology(cfg: SimConfig) -> OntologyTree:
    if cfg.ontology_file:
        return read_ontology_file(cfg.ontology_file)
    return generate_ontology(cfg.ontology_seed, cfg.ontology_leaves)


class SimWorld:
    """Clock, geometry and message plumbing shared by every protocol driver.

    Randomness comes from one seed split into independent streams, drawn in
    this order: placement, speed classes, popularity ranking and capability
    assignment, trajectories, the query stream.  Protocol drivers seed their
    own per-node generators from ``node_seed``.
    """

    def __init__(self, config: SimConfig, tree: OntologyTree):
        self.config = config
        self.tree = tree
        n = config.nodes
        ss = np.random.SeedSequence(config.seed)
        place_rng, class_rng, cap_rng, move_rng, query_rng = (np.random.default_rng(s) for s in ss.spawn(5))
        side = config.side
        self.side = side
        if config.expected_degree < 1:
            warnings.warn(f"expected degree {config.expected_degree:.2f} < 1; the network will be sparse")
        self.total_periods = config.warmup + config.duration + config.drain + config.utility.k_periods + 2
        start = place_rng.uniform(0.0, side, (n, 2))
        self.classes = assign_classes(class_rng, n, config.mobility_mix)
        self.catalog = ZipfCatalog(tree.leaf_onids(), config.zipf_skew, cap_rng)
        self.caps = assign_capabilities(cap_rng, n, config.holder_fraction, self.catalog)
        if config.trace_file:
            self.positions = read_trace(config.trace_file, n, self.total_periods)
        else:
            self.positions = random_waypoint(
                move_rng, start, self.classes, side, config.speed_caps, self.total_periods
            )
        self.queries = QueryStream(query_rng, n, self.catalog, self.caps)
        self.holders: dict[Onid, list[int]] = {}
        for node, cs in enumerate(self.caps):
            for c in cs:
                self.holders.setdefault(c, []).append(node)

        self.t = 0
        self.phase = "bootstrap"
        self._queue: list = []
        self._seq = itertools.count()
        self.neighbors: list[frozenset[int]] = [frozenset()] * n
        self._pairs = np.empty((0, 2), dtype=np.int64)
        self._components: np.ndarray | None = None
        # per-topology memo: the sparse graph and single-source distance rows
        self._dist_cache: dict = {}
        self.stats = StatsAccumulator()
        self.pending: dict[int, QueryRecord] = {}
        self._qids = itertools.count()
        # plans keyed by window start, then node; old windows are dropped as time passes
        self._plans: dict[int, dict[int, MobilityPlan]] = {}
        self.driver = None

    # --- geometry ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.config.nodes

    def position(self, node: int, t: int | None = None) -> tuple[float, float]:
        t = self.t if t is None else t
        x, y = self.positions[min(t, self.total_periods - 1), node]
        return float(x), float(y)

    def plan_of(self, node: int, start: int | None = None) -> MobilityPlan:
        """Ground-truth positions over the k periods from ``start`` (default: next period)."""
        start = self.t + 1 if start is None else start
        window = self._plans.setdefault(start, {})
        plan = window.get(node)
        if plan is None:
            last = self.total_periods - 1
            pts = tuple(
                (t, float(self.positions[min(t, last), node, 0]), float(self.positions[min(t, last), node, 1]))
                for t in range(start, start + self.config.utility.k_periods)
            )
            plan = window[node] = MobilityPlan(node, pts, self.config.comm_range)
        return plan

    def _refresh_neighbors(self) -> set[int]:
        pts = self.positions[min(self.t, self.total_periods - 1)]
        pairs = cKDTree(pts).query_pairs(self.config.comm_range, output_type="ndarray")
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in pairs.tolist():
            adj[a].add(b)
            adj[b].add(a)
        changed = set()
        new = []
        for i, s in enumerate(adj):
            fs = frozenset(s)
            if fs != self.neighbors[i]:
                changed.add(i)
            new.append(fs)
        self.neighbors = new
        self._pairs = pairs
        if changed or self._components is None:
            self._components = None
            self._dist_cache = {}
        return changed

    def _graph(self):
        g = self._dist_cache.get("graph")
        if g is None:
            p = self._pairs
            g = self._dist_cache["graph"] = coo_matrix(
                (np.ones(len(p)), (p[:, 0], p[:, 1])), shape=(self.n, self.n)
            ).tocsr()
        return g

    def component_of(self, node: int) -> int:
        if self._components is None:
            self._components = connected_components(self._graph(), directed=False)[1]
        return int(self._components[node])

    def distances_from(self, src: int) -> np.ndarray:
        """Hop counts from ``src`` to every node on the current topology; -1 if unreachable."""
        row = self._dist_cache.get(src)
        if row is None:
            d = shortest_path(self._graph(), directed=False, unweighted=True, indices=src)
            row = self._dist_cache[src] = np.where(np.isinf(d), -1, d).astype(np.int64)
        return row

    def diameter(self) -> int:
        """Longest shortest path inside any connected component."""
        if self.n == 0:
            return 0
        d = shortest_path(self._graph(), directed=False, unweighted=True)
        finite = d[np.isfinite(d)]
        return int(finite.max()) if finite.size else 0

    def distance(self, a: int, b: int) -> int | None:
        d = int(self.distances_from(a)[b])
        return None if d < 0 else d

    def hop_distances(self, src: int, limit: int | None = None) -> dict[int, int]:
        """Breadth-first hop counts from ``src`` over the current topology."""
        dist = {src: 0}
        frontier = [src]
        d = 0
        while frontier and (limit is None or d < limit):
            d += 1
            nxt = []
            for u in frontier:
                for v in self.neighbors[u]:
                    if v not in dist:
                        dist[v] = d
                        nxt.append(v)
            frontier = nxt
        return dist

    def node_seed(self, node: int) -> int:
        return self.config.seed * 1_000_003 + node

    # --- events -----------------------------------------------------------
    def schedule(self, t: int, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (t, next(self._seq), _CALL, (fn, args)))

    def counting(self, cls: str) -> bool:
        return self.phase == "measure" or (self.phase == "drain" and cls in QUERY_CLASSES)

    def charge(self, cls: str, nbytes: int, messages: int = 1) -> None:
        """Account traffic that is modelled analytically rather than delivered."""
        if self.counting(cls):
            self.stats.bytes[cls] += nbytes
            self.stats.messages[cls] += messages

    def send(self, src: int, dst: int, kind: str, payload, nbytes: int, cls: str) -> None:
        """Transmit over the link src-dst; delivery is one period later if the link survives."""
        self.charge(cls, nbytes)
        msg = Message(src, dst, kind, payload, nbytes, cls, self.t)
        heapq.heappush(self._queue, (self.t + 1, next(self._seq), _DELIVER, msg))

    # --- queries ----------------------------------------------------------
    def _query_tick(self) -> None:
        cfg = self.config
        if self.phase == "measure":
            sizes = self.driver.table_bytes()
            self.stats.rt_samples.append(float(np.mean(sizes)) if len(sizes) else 0.0)
            for source, target in self.queries.batch(cfg.query_batch):
                comp = self.component_of(source)
                reachable = any(self.component_of(h) == comp for h in self.holders[target])
                rec = QueryRecord(next(self._qids), source, target, self.t, reachable)
                self.stats.queries.append(rec)
                self.pending[rec.qid] = rec
                self.driver.issue(rec)
        nxt = self.t + cfg.q_interval
        if nxt < cfg.warmup + cfg.duration:
            self.schedule(nxt, self._query_tick)

    def finish(self, rec: QueryRecord, found: bool, hops: int, provider: int | None = None, reason: str = "") -> None:
        if rec.outcome != "pending":
            return
        rec.outcome = "found" if found else "failed"
        rec.hops = hops
        rec.provider = provider
        rec.reason = reason
        rec.finished = self.t
        self.pending.pop(rec.qid, None)


def make_driver(world: SimWorld):
    p = world.config.protocol
    if p in ("srp", "dsdv"):
        from .srp import SrpDriver

        return SrpDriver(world, summarize=p == "srp")
    if p == "flooding":
        from ..baselines.flooding import FloodingDriver

        return FloodingDriver(world)
    if p == "gsd":
        from ..baselines.gsd import GsdDriver

        return GsdDriver(world)
    if p == "centralized":
        from ..baselines.centralized import CentralizedDriver

        return CentralizedDriver(world)
    from ..baselines.chord import ChordDriver

    return ChordDriver(world)


@contextmanager
def _relaxed_gc():
    # routing state is millions of small acyclic tuples; frequent cycle scans only cost time
    old = gc.get_threshold()
    gc.set_threshold(50_000, 20, 100)
    try:
        yield
    finally:
        gc.set_threshold(*old)


def build_world(config: SimConfig, ontology: OntologyTree | None = None) -> SimWorld:
    """Place nodes, assign capabilities and trajectories, and attach the protocol driver."""
    with _relaxed_gc():
        return _build_world(config, ontology)


def _build_world(config: SimConfig, ontology: OntologyTree | None) -> SimWorld:
    world = SimWorld(config, ontology if ontology is not None else load_ontology(config))
    world._refresh_neighbors()
    world.driver = make_driver(world)
    rounds = config.bootstrap_rounds
    if rounds < 0:
        # a static network starts converged; a mobile one starts from its own capabilities
        rounds = 0 if config.mobile else 2 * world.diameter()
    world.driver.bootstrap(rounds)
    world.phase = "warmup" if config.warmup > 0 else "measure"
    world.driver.start()
    if config.duration > 0:
        world.schedule(config.warmup, world._query_tick)
    return world


def step(world: SimWorld) -> SimWorld:
    """Advance one period: move, rebuild neighbour sets, then run every event due now."""
    cfg = world.config
    if world.t >= cfg.warmup + cfg.duration:
        world.phase = "drain"
    elif world.t >= cfg.warmup:
        world.phase = "measure"
    if cfg.mobile and world.t > 0:
        changed = world._refresh_neighbors()
        if changed:
            world.driver.on_topology(changed)
    q = world._queue
    while q and q[0][0] <= world.t:
        _, _, kind, obj = heapq.heappop(q)
        if kind == _CALL:
            fn, args = obj
            fn(*args)
        elif obj.dst in world.neighbors[obj.src]:
            world.driver.on_message(obj)
        else:
            world.stats.dropped[obj.cls] += 1
            world.driver.on_drop(obj)
    world.t += 1
    for start in [s for s in world._plans if s < world.t - 1]:
        del world._plans[start]
    return world


def run_world(world: SimWorld) -> StatsReport:
    with _relaxed_gc():
        return _run_world(world)


def _run_world(world: SimWorld) -> StatsReport:
    cfg = world.config
    end = cfg.warmup + cfg.duration
    while world.t < end:
        step(world)
    limit = end + cfg.drain
    while world.pending and world.t < limit:
        step(world)
    for rec in list(world.pending.values()):
        world.finish(rec, False, rec.hops, reason="unresolved at end of run")
    return report(world)


def run(config: SimConfig, ontology: OntologyTree | None = None) -> StatsReport:
    if config.protocol == "flooding" and config.baseline.flood_hop_limit == 0:
        from ..baselines.flooding import calibrate_hop_limit

        config = calibrate_hop_limit(config, ontology)
    return run_world(build_world(config, ontology))


def _p95(values: list[int]) -> int:
    # nearest-rank percentile keeps the value an integer hop count
    if not values:
        return 0
    s = sorted(values)
    return s[max(0, math.ceil(0.95 * len(s)) - 1)]


def report(world: SimWorld) -> StatsReport:
    cfg = world.config
    s = world.stats
    control = sum(v for k, v in s.bytes.items() if k in CONTROL_CLASSES)
    query = sum(v for k, v in s.bytes.items() if k in QUERY_CLASSES)
    hops = s.hops()
    row = {
        "protocol": cfg.protocol,
        "seed": cfg.seed,
        "nodes": cfg.nodes,
        "ontology_leaves": len(world.tree.leaves()),
        "Q": cfg.q_interval,
        "A": cfg.a_interval,
        "RTB_bytes": cfg.rtb_bytes,
        "mobility_mix": "/".join(str(m) for m in cfg.mobility_mix),
        "total_bytes": sum(s.bytes.values()),
        "adv_bytes": control,
        "query_bytes": query,
        "avg_query_hops": f"{(sum(hops) / len(hops)) if hops else 0.0:.4f}",
        "p95_query_hops": _p95(hops),
        "success_rate": f"{s.success_rate:.4f}",
        "avg_rt_bytes": f"{(sum(s.rt_samples) / len(s.rt_samples)) if s.rt_samples else 0.0:.1f}",
    }
    extra = {"dropped": dict(sorted(s.dropped.items()))} if s.dropped else {}
    extra.update(world.driver.extra_stats())
    return StatsReport(row, s, cfg, extra)


def csv_text(reports: list[StatsReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row)
    return buf.getvalue()


class Driver:
    """Protocol behaviour plugged into the event loop; every hook is optional."""

    def __init__(self, world: SimWorld):
        self.world = world

    def bootstrap(self, rounds: int) -> None:
        pass

    def start(self) -> None:
        pass

    def on_topology(self, changed: set[int]) -> None:
        pass

    def on_message(self, msg: Message) -> None:
        pass

    def on_drop(self, msg: Message) -> None:
        pass

    def issue(self, rec: QueryRecord) -> None:
        raise NotImplementedError

    def table_bytes(self) -> list[int]:
        return []

    def extra_stats(self) -> dict[str, object]:
        return {}
