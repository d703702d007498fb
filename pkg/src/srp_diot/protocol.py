"""Node state machine: periodic advertisement, advertisement receipt and query lookup."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Union

from .metrics import MobilityPlan, UtilityParams, overlap, quantize8
from .ontology import Onid
from .routing_table import AdvertisedCapability, RoutingTable, merge_advertised

HEADER_BYTES = 12
AD_ENTRY_METRIC_BYTES = 6  # ut, hop, oc, ug, stb, upstream overlap
PLAN_POINT_BYTES = 8  # one (x, y) pair per future period
QUERY_COUNTER_BYTES = 2  # ttl and random-forward budget
PATH_ELEMENT_BYTES = 4
STACK_ELEMENT_BYTES = 1  # index into the path
REPLY_EXTRA_BYTES = 4  # provider id

DEFAULT_TTL = 64
DEFAULT_RF_BUDGET = 10


@dataclass(frozen=True)
class Query:
    qid: int
    cpb: Onid
    sn: int
    ttl: int
    rf_budget: int
    # every node the query has visited, in first-visit order
    path: tuple[int, ...]
    # current route from the source; the last element holds the query
    stack: tuple[int, ...]
    hops_taken: int = 0
    random_forwards: int = 0
    backtracks: int = 0

    @property
    def holder(self) -> int:
        return self.stack[-1]

    @property
    def wire_size(self) -> int:
        return (
            HEADER_BYTES
            + self.cpb.nbytes
            + QUERY_COUNTER_BYTES
            + PATH_ELEMENT_BYTES * len(self.path)
            + STACK_ELEMENT_BYTES * len(self.stack)
        )

    def reply_size(self) -> int:
        return HEADER_BYTES + self.cpb.nbytes + REPLY_EXTRA_BYTES


@dataclass(frozen=True)
class Found:
    provider: int
    query: Query


@dataclass(frozen=True)
class Forward:
    next_hop: int
    query: Query
    matched: Onid | None = None


@dataclass(frozen=True)
class Backtrack:
    prev: int
    query: Query


@dataclass(frozen=True)
class Fail:
    query: Query
    reason: str


QueryOutcome = Union[Found, Forward, Backtrack, Fail]


class AdEntry(NamedTuple):
    onid: Onid
    ut: int
    hop: int
    oc_q8: int
    ug_q8: int
    stb: int
    upstream: int
    upstream_overlap: int


@dataclass(frozen=True)
class Advertisement:
    sender: int
    entries: tuple[AdEntry, ...]
    # trajectories of the sender and of every upstream node named in entries
    plans: dict[int, MobilityPlan] = field(default_factory=dict, compare=False)

    @property
    def size_bytes(self) -> int:
        if not self.entries:
            onid_bytes = 0
        else:
            onid_bytes = self.entries[0].onid.nbytes
        k = max((len(p.positions) for p in self.plans.values()), default=0)
        return (
            HEADER_BYTES
            + len(self.entries) * (onid_bytes + AD_ENTRY_METRIC_BYTES)
            + len(self.plans) * k * PLAN_POINT_BYTES
        )


@dataclass
class NodeState:
    node_id: int
    own: frozenset[Onid]
    table: RoutingTable
    # plan_of(node, start=None): trajectory over the next k periods, or over the
    # window beginning at ``start``; None means a static network
    plan_of: Callable[..., MobilityPlan] | None = None
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    ttl: int = DEFAULT_TTL
    rf_budget: int = DEFAULT_RF_BUDGET
    dropped_ads: int = 0
    # static networks only: last entries seen per sender and the items built from them
    _ad_cache: dict = field(default_factory=dict, repr=False)

    @property
    def neighbors(self) -> set[int]:
        return self.table.neighbors

    @property
    def params(self) -> UtilityParams:
        return self.table.params


def make_node(
    node_id: int,
    own: set[Onid] | frozenset[Onid],
    width_bits: int,
    rtb_bytes: int,
    params: UtilityParams | None = None,
    avg_degree: float = 2.0,
    avg_sparseness: float = 1.0,
    **kw,
) -> NodeState:
    table = RoutingTable(node_id, width_bits, rtb_bytes, params, avg_degree, avg_sparseness)
    for onid in own:
        table.add_own(onid)
    return NodeState(node_id, frozenset(own), table, **kw)


def _overlap_or_full(node: NodeState, a: MobilityPlan | None, b: MobilityPlan | None) -> int:
    if a is None or b is None:
        return node.params.k_periods
    return overlap(a, b)


def advertise(node: NodeState) -> list[tuple[int, Advertisement]]:
    """Build this node's advertisement: the best tuple of every table entry.

    The same message goes to every current neighbour.
    """
    if not node.neighbors:
        return []
    msg = _build_ad(node, node.table.entries.items())
    return [(n, msg) for n in sorted(node.neighbors)]


def hello(node: NodeState) -> Advertisement | None:
    """A short advertisement of the node's own capabilities, for a newly met neighbour."""
    if not node.own:
        return None
    return _build_ad(node, ((o, e) for o, e in node.table.entries.items() if o in node.own))


def _preference(t) -> tuple[int, int, int]:
    return -t.ut, t.hop, t.neighbor_id


def _build_ad(node: NodeState, items) -> Advertisement:
    me = node.node_id
    plan_of = node.plan_of
    plans: dict[int, MobilityPlan] = {}
    if plan_of is not None:
        plans[me] = plan_of(me)
    up_ov: dict[int, int] = {me: node.params.k_periods}
    entries = []
    for onid, entry in items:
        if not entry.tuples:
            continue
        tups = entry.tuples
        if len(tups) == 1:
            (best,) = tups.values()
        else:
            best = min(tups.values(), key=_preference)
        up = best.neighbor_id
        if up not in up_ov:
            if plan_of is not None:
                plans[up] = plan_of(up)
            up_ov[up] = _overlap_or_full(node, plans.get(me), plans.get(up))
        entries.append(
            AdEntry(onid, best.ut, best.hop, quantize8(best.oc), quantize8(entry.usage.ug), best.stb, up, up_ov[up])
        )
    return Advertisement(me, tuple(entries), plans)


def on_advertisement(node: NodeState, msg: Advertisement, complete: bool = True) -> bool:
    """Merge a received advertisement; returns False when it was dropped.

    A ``complete`` advertisement replaces everything learned from the sender
    before; a partial one (a hello) only adds or refreshes routes.
    """
    sender = msg.sender
    if sender not in node.neighbors:
        node.dropped_ads += 1
        return False
    if node.plan_of is None and complete:
        cached = node._ad_cache.get(sender)
        if cached is not None and cached[0] == msg.entries:
            merge_advertised(node.table, sender, cached[1], withdraw=True)
            return True
    me = node.node_id
    mine = None
    if node.plan_of is not None:
        ref = msg.plans.get(sender)
        # compare over the window the sender predicted, not the current one
        mine = node.plan_of(me, ref.periods[0]) if ref is not None else node.plan_of(me)
    local = _overlap_or_full(node, msg.plans.get(sender), mine)
    skip_cache: dict[int, int] = {sender: local}
    items = []
    for e in msg.entries:
        if e.upstream == me:
            # our own route reflected back; ignoring it also withdraws the stale copy
            continue
        skip = skip_cache.get(e.upstream)
        if skip is None:
            skip = skip_cache[e.upstream] = _overlap_or_full(node, msg.plans.get(e.upstream), mine)
        items.append(
            AdvertisedCapability(e.onid, e.ut, e.hop, e.oc_q8 / 255, (skip, local, e.upstream_overlap), e.ug_q8 / 255)
        )
    if node.plan_of is None and complete:
        node._ad_cache[sender] = (msg.entries, items)
    merge_advertised(node.table, sender, items, withdraw=complete)
    return True


def issue_query(node: NodeState, cpb: Onid, qid: int = 0) -> Query:
    for matched, _ in node.table.ranked(cpb):
        node.table.reference(matched)
        break
    me = node.node_id
    return Query(qid, cpb, me, node.ttl, node.rf_budget, (me,), (me,))


def on_query(node: NodeState, q: Query) -> QueryOutcome:
    """Decide what the node holding ``q`` does with it.

    Order: answer locally; follow the best unvisited table match, from the
    exact code up through its ancestors; forward at random while the budget
    lasts; otherwise step back along the route, failing at the source.
    """
    me = node.node_id
    if q.holder != me:
        return Fail(q, f"query held by {q.holder}, delivered to {me}")
    if q.cpb in node.own:
        return Found(me, q)
    if q.ttl <= 0:
        return Fail(q, "ttl exhausted")
    nbrs = node.neighbors
    visited = set(q.path)
    for matched, tuples in node.table.ranked(q.cpb):
        for t in tuples:
            n = t.neighbor_id
            if n in nbrs and n not in visited:
                if q.hops_taken > 0:
                    node.table.reference(matched)
                return Forward(n, advance(q, n), matched)
    if q.rf_budget > 0:
        options = sorted(nbrs - visited)
        if options:
            n = node.rng.choice(options)
            q2 = advance(q, n)
            return Forward(n, replace(q2, rf_budget=q.rf_budget - 1, random_forwards=q.random_forwards + 1))
    if len(q.stack) > 1:
        prev = q.stack[-2]
        return Backtrack(prev, replace(q, stack=q.stack[:-1], hops_taken=q.hops_taken + 1, backtracks=q.backtracks + 1))
    return Fail(q, "search exhausted at the source")


def advance(q: Query, n: int) -> Query:
    path = q.path if n in q.path else q.path + (n,)
    return replace(q, ttl=q.ttl - 1, path=path, stack=q.stack + (n,), hops_taken=q.hops_taken + 1)


def bounce(q: Query) -> Query:
    """Undo the last forward after the link to the next hop broke.

    The unreachable node stays on the visited path so it is not retried.
    """
    return replace(q, stack=q.stack[:-1])
