"""ONID-indexed routing table with a byte size model and budgeted summarization."""

from __future__ import annotations

from dataclasses import dataclass, field
from operator import attrgetter
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import MalformedOnidError, PreconditionError, UnknownNeighborError
from .metrics import (
    UsageState,
    UtilityParams,
    coverage_estimate,
    stability_propagate,
    summary_utility,
    usage_update,
    utility,
)
from .ontology import Onid, common_ancestor

ENTRY_OVERHEAD_BYTES = 2  # oc and ug, one byte each
TUPLE_BYTES = 8  # 4 id + ut + hop + stb + reserved


class NeighborTuple(NamedTuple):
    neighbor_id: int
    ut: int
    hop: int
    stb: int
    # coverage as seen through this neighbour; leaves are always 1
    oc: float = 1.0


@dataclass
class CapabilityEntry:
    onid: Onid
    usage: UsageState = field(default_factory=UsageState)
    tuples: dict[int, NeighborTuple] = field(default_factory=dict)

    @property
    def oc(self) -> float:
        return max((t.oc for t in self.tuples.values()), default=1.0)

    @property
    def ug(self) -> float:
        return self.usage.ug


class TableRow(NamedTuple):
    """One (capability, neighbour) pair, the unit summarization works on."""

    onid: Onid
    tup: NeighborTuple
    ug: float
    # for a summary built here: the (onid, tuple, ug) rows folded into it
    members: tuple = ()

    @property
    def neighbor(self) -> int:
        return self.tup.neighbor_id

    @property
    def oc(self) -> float:
        return self.tup.oc


class AdvertisedCapability(NamedTuple):
    """A capability as received from a neighbour.

    ``onid`` may be a raw ``(id_bits, sp_bits, length)`` triple straight off the
    wire; it is validated on merge. ``stb_info`` holds the three overlaps fed to
    :func:`stability_propagate`: receiver with the sender's upstream, sender
    with receiver, and sender with its upstream.
    """

    onid: Onid | tuple[int, int, int]
    ut: int
    hop: int
    oc: float
    stb_info: tuple[int, int, int]
    ug: float


_tuples_of = attrgetter("tuples")


def _entry_bytes(width: int, n_tuples: int) -> int:
    return 2 * ((width + 7) // 8) + ENTRY_OVERHEAD_BYTES + TUPLE_BYTES * n_tuples


class RoutingTable:
    def __init__(
        self,
        owner: int,
        width_bits: int,
        rtb_bytes: int,
        params: UtilityParams | None = None,
        avg_degree: float = 2.0,
        avg_sparseness: float = 1.0,
    ):
        self.owner = owner
        self.width = width_bits
        self.rtb_bytes = rtb_bytes
        self.params = params or UtilityParams()
        self.avg_degree = avg_degree
        self.avg_sparseness = avg_sparseness
        self.entries: dict[Onid, CapabilityEntry] = {}
        self.own: set[Onid] = set()
        self.neighbors: set[int] = set()
        self.malformed_skipped = 0
        self.evicted_tuples = 0
        self.summarization_runs = 0
        self._last_ad: dict[int, tuple] = {}
        self._memo: dict[int, dict] = {}
        # (summary onid, neighbour) -> {member onid: (tuple, ug)}
        self._summaries: dict[tuple[Onid, int], dict[Onid, tuple[NeighborTuple, float]]] = {}
        # when off, an over-budget table is trimmed by eviction alone
        self.summarize = True
        # routes at this distance count as unreachable, which bounds count-to-infinity loops
        self.max_hop: int | None = None
        # loop guard: hop counts at or above the smallest hop held for a code
        # are refused; the record is released after ``holddown`` absent ticks
        self.holddown: int | None = None
        self._feasible: dict[Onid, list[int]] = {}

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def size_bytes(self) -> int:
        return size_bytes(self)

    def add_own(self, onid: Onid) -> None:
        if onid.width != self.width:
            raise MalformedOnidError("own capability has the wrong width")
        k = self.params.k_periods
        tup = NeighborTuple(self.owner, utility(k, 1.0, 1.0, 0, self.params), 0, k, 1.0)
        self.own.add(onid)
        self.entries[onid] = CapabilityEntry(onid, UsageState(1.0), {self.owner: tup})

    def set_neighbors(self, ids: Iterable[int]) -> None:
        """Update the current neighbour set, dropping tuples of departed neighbours."""
        new = set(ids)
        gone = self.neighbors - new
        self.neighbors = new
        if not gone:
            return
        for g in gone:
            self._last_ad.pop(g, None)
            self._memo.pop(g, None)
        for key in [k for k in self._summaries if k[1] in gone]:
            del self._summaries[key]
        for onid in list(self.entries):
            if onid in self.own:
                continue
            entry = self.entries[onid]
            for g in gone:
                entry.tuples.pop(g, None)
            if not entry.tuples:
                del self.entries[onid]

    def rows(self) -> list[TableRow]:
        """Rows of every non-own entry, in table order."""
        out = []
        for onid, entry in self.entries.items():
            if onid in self.own:
                continue
            for nb, tup in entry.tuples.items():
                rec = self._summaries.get((onid, nb))
                members = tuple((o, t, u) for o, (t, u) in rec.items()) if rec else ()
                out.append(TableRow(onid, tup, entry.usage.ug, members))
        return out

    def own_bytes(self) -> int:
        return sum(_entry_bytes(self.width, len(self.entries[o].tuples)) for o in self.own)

    def replace_rows(self, rows: Sequence[TableRow]) -> None:
        """Rebuild all non-own entries from ``rows``; duplicate pairs keep the higher ut."""
        old = self.entries
        fresh: dict[Onid, CapabilityEntry] = {o: old[o] for o in old if o in self.own}
        ugs: dict[Onid, float] = {}
        summaries: dict[tuple[Onid, int], tuple] = {}
        for row in rows:
            if row.onid in self.own:
                continue
            entry = fresh.get(row.onid)
            if entry is None:
                prev = old.get(row.onid)
                refs = prev.usage.period_refs if prev is not None else 0
                entry = fresh[row.onid] = CapabilityEntry(row.onid, UsageState(row.ug, refs))
                ugs[row.onid] = row.ug
            elif row.ug > ugs[row.onid]:
                ugs[row.onid] = row.ug
                entry.usage = UsageState(row.ug, entry.usage.period_refs)
            nb = row.tup.neighbor_id
            cur = entry.tuples.get(nb)
            if cur is None or row.tup.ut > cur.ut:
                entry.tuples[nb] = row.tup
                summaries[(row.onid, nb)] = row.members
        self.entries = fresh
        self._summaries = {k: {o: (t, u) for o, t, u in m} for k, m in summaries.items() if m}
        # any cached advertisement may now disagree with the table
        self._last_ad.clear()

    def reference(self, onid: Onid, n: int = 1) -> None:
        entry = self.entries.get(onid)
        if entry is not None:
            entry.usage = entry.usage.referenced(n)

    def usage_tick(self) -> None:
        """Close a usage period: fold references into ug and refresh utilities."""
        p = self.params
        for onid, entry in self.entries.items():
            if onid in self.own:
                continue
            entry.usage = usage_update(entry.usage, p.alpha, p.ug_cap)
            ug = entry.usage.ug
            entry.tuples = {
                n: NeighborTuple(n, utility(t.stb, ug, t.oc, t.hop, p), t.hop, t.stb, t.oc)
                for n, t in entry.tuples.items()
            }
        if self.holddown is not None:
            for onid in list(self._feasible):
                rec = self._feasible[onid]
                if onid in self.entries:
                    rec[1] = 0
                else:
                    rec[1] += 1
                    if rec[1] > self.holddown:
                        del self._feasible[onid]
        self._last_ad.clear()

    def ranked(self, target: Onid) -> Iterator[tuple[Onid, list[NeighborTuple]]]:
        """Matching entries from the exact code up to the root, best tuple first."""
        for anc in target.ancestors:
            entry = self.entries.get(anc)
            if entry is not None and entry.tuples:
                yield anc, sorted(entry.tuples.values(), key=lambda t: (-t.ut, t.hop, t.neighbor_id))

    def dump(self) -> str:
        lines = []
        for onid in sorted(self.entries):
            entry = self.entries[onid]
            for n in sorted(entry.tuples):
                t = entry.tuples[n]
                lines.append(
                    f"{onid.id_hex} {onid.sp_hex} {n} {t.ut} {t.hop} {t.stb} {t.oc:.4f} {entry.ug:.4f}"
                )
        return "\n".join(lines) + ("\n" if lines else "")


def size_bytes(rt: RoutingTable) -> int:
    entries = rt.entries
    n_tuples = sum(map(len, map(_tuples_of, entries.values())))
    return len(entries) * _entry_bytes(rt.width, 0) + TUPLE_BYTES * n_tuples


def rows_size(rows: Iterable[TableRow], width: int) -> int:
    pairs: dict[Onid, set[int]] = {}
    for r in rows:
        pairs.setdefault(r.onid, set()).add(r.neighbor)
    return sum(_entry_bytes(width, len(ns)) for ns in pairs.values())


def _as_onid(raw, width: int) -> Onid:
    if isinstance(raw, Onid):
        if raw.width != width:
            raise MalformedOnidError(f"width {raw.width} != {width}")
        return raw
    id_bits, sp_bits, length = raw
    return Onid(id_bits, sp_bits, width, length)


def merge_advertised(
    rt: RoutingTable,
    from_neighbor: int,
    advertised: Sequence[AdvertisedCapability],
    withdraw: bool = False,
) -> RoutingTable:
    """Fold a neighbour's advertisement into ``rt`` and enforce the size budget.

    With ``withdraw`` the advertisement is treated as the neighbour's complete
    table: its tuples for codes that are neither advertised nor an ancestor of
    an advertised code are dropped.
    """
    if from_neighbor not in rt.neighbors:
        raise UnknownNeighborError(from_neighbor)
    key = tuple(advertised)
    if withdraw and rt._last_ad.get(from_neighbor) == key:
        return rt
    p = rt.params
    seen: set[Onid] = set()
    # results of the previous merge from this neighbour, used to skip
    # recomputing items whose inputs and stored tuple are unchanged
    memo = rt._memo.get(from_neighbor, {})
    new_memo = {}
    inserted: list[Onid] = []
    for item in advertised:
        try:
            onid = _as_onid(item.onid, rt.width)
        except (MalformedOnidError, TypeError, ValueError):
            rt.malformed_skipped += 1
            continue
        if rt.max_hop is not None and item.hop + 1 >= rt.max_hop:
            continue
        if rt.holddown is not None:
            rec = rt._feasible.get(onid)
            if rec is not None and item.hop >= rec[0]:
                continue
        seen.add(onid)
        if onid in rt.own:
            continue
        entry = rt.entries.get(onid)
        if entry is None:
            entry = rt.entries[onid] = CapabilityEntry(onid, UsageState(item.ug))
        else:
            prev = memo.get(onid)
            if (
                prev is not None
                and entry.tuples.get(from_neighbor) is prev[1]
                and prev[0] == item
                and prev[2] == entry.usage.ug
            ):
                new_memo[onid] = prev
                continue
        hop = item.hop + 1
        stb = stability_propagate(*item.stb_info, p.k_periods)
        ug = entry.usage.ug
        tup = NeighborTuple(from_neighbor, utility(stb, ug, item.oc, hop, p), hop, stb, item.oc)
        if from_neighbor not in entry.tuples:
            inserted.append(onid)
        entry.tuples[from_neighbor] = tup
        new_memo[onid] = (item, tup, ug)
        if rt.holddown is not None:
            rec = rt._feasible.get(onid)
            if rec is None:
                rt._feasible[onid] = [hop, 0]
            elif hop < rec[0]:
                rec[0] = hop
    rt._memo[from_neighbor] = new_memo
    if withdraw:
        stale = [
            onid
            for onid, entry in rt.entries.items()
            if from_neighbor in entry.tuples and onid not in seen and onid not in rt.own
        ]
        if stale:
            keep = {a for o in seen for a in o.ancestors}
            for onid in stale:
                if onid in keep:
                    continue
                entry = rt.entries[onid]
                del entry.tuples[from_neighbor]
                if not entry.tuples:
                    del rt.entries[onid]
    if inserted and size_bytes(rt) > rt.rtb_bytes and rt.summarize:
        _absorb(rt, from_neighbor, inserted)
    if size_bytes(rt) > rt.rtb_bytes:
        routing_table_summarization(rt)
    elif withdraw:
        rt._last_ad[from_neighbor] = key
    return rt


def _absorb(rt: RoutingTable, nb: int, inserted: list[Onid]) -> None:
    """Fold newly inserted rows into existing summaries for the same neighbour.

    Re-advertised members of a summary would otherwise be re-inserted and
    regrouped by a full summarization on every advertisement.
    """
    touched: dict[Onid, dict] = {}
    for onid in inserted:
        entry = rt.entries.get(onid)
        if entry is None or nb not in entry.tuples:
            continue
        for anc in onid.ancestors[1:]:
            rec = rt._summaries.get((anc, nb))
            if rec is None:
                continue
            host = rt.entries.get(anc)
            if host is None or nb not in host.tuples:
                del rt._summaries[(anc, nb)]
                continue
            val = (entry.tuples.pop(nb), entry.usage.ug)
            if not entry.tuples:
                del rt.entries[onid]
            inner = rt._summaries.pop((onid, nb), None)
            touched.pop(onid, None)
            if inner:
                # a summary folded into a wider one hands over its members
                rec.update(inner)
                touched[anc] = True
                break
            prev = rec.get(onid)
            rec[onid] = val
            if prev != val:
                # coverage only moves when membership or member coverage does
                grew = prev is None or prev[0].oc != val[0].oc
                touched[anc] = touched.get(anc, False) or grew
            break
    deg, sparse = rt.avg_degree, rt.avg_sparseness
    for anc, grew in touched.items():
        rec = rt._summaries[(anc, nb)]
        best = min((t for t, _ in rec.values()), key=lambda t: (-t.ut, t.hop))
        oc = rt.entries[anc].tuples[nb].oc
        if grew:
            oc = coverage_estimate(anc, [(o, t.oc) for o, (t, _) in rec.items()], deg, sparse).oc
        rt.entries[anc].tuples[nb] = NeighborTuple(nb, best.ut, best.hop, best.stb, oc)
    if touched:
        rt._last_ad.clear()


def _summary_row(rst: Onid, members: list[TableRow], deg: float, sparse: float) -> TableRow:
    best = min(members, key=lambda r: (-r.tup.ut, r.tup.hop))
    cov = coverage_estimate(rst, [(m.onid, m.oc) for m in members], deg, sparse)
    tup = NeighborTuple(
        best.neighbor,
        summary_utility([m.tup.ut for m in members]),
        best.tup.hop,
        best.tup.stb,
        cov.oc,
    )
    flat = []
    for m in members:
        if m.members:
            flat.extend(m.members)
        else:
            flat.append((m.onid, m.tup, m.ug))
    return TableRow(rst, tup, sum(m.ug for m in members) / len(members), tuple(flat))


def _pass_one_neighbor(
    items: list[tuple[int, TableRow]], sl: int, deg: float, sparse: float
) -> list[tuple[int, TableRow]]:
    """One greedy pass over rows of a single neighbour; items carry their global position.

    Rows before the current head are always consumed, so the first live row of
    a bucket is the earliest candidate partner.
    """
    n = len(items)
    alive = [True] * n
    # bucket[a]: rows that descend from a by at most sl levels, in order
    buckets: dict[Onid, list[int]] = {}
    for i, item in enumerate(items):
        anc = item[1].onid.ancestors
        for a in anc[: sl + 1]:
            buckets.setdefault(a, []).append(i)
    # only ancestors shared by two or more rows can pair anything
    shared = {a for a, lst in buckets.items() if len(lst) > 1}
    if not shared:
        return items
    cursor: dict[Onid, int] = {}

    def first_alive(key: Onid) -> int | None:
        lst = buckets[key]
        c = cursor.get(key, 0)
        while c < len(lst) and not alive[lst[c]]:
            c += 1
        cursor[key] = c
        return lst[c] if c < len(lst) else None

    out = []
    for i in range(n):
        if not alive[i]:
            continue
        alive[i] = False
        pos, head = items[i]
        partner = None
        for a in head.onid.ancestors[: sl + 1]:
            if a not in shared:
                continue
            j = first_alive(a)
            if j is not None and (partner is None or j < partner):
                partner = j
        if partner is None:
            out.append((pos, head))
            continue
        rst = common_ancestor(head.onid, items[partner][1].onid)[0]
        members = [head]
        for j in buckets[rst]:
            if alive[j]:
                alive[j] = False
                members.append(items[j][1])
        out.append((pos, _summary_row(rst, members, deg, sparse)))
    return out


def summarize_pass(
    rows: Sequence[TableRow], sl: int, avg_degree: float, avg_sparseness: float
) -> list[TableRow]:
    """A single greedy first-match pass at level ``sl``."""
    if sl < 1:
        raise PreconditionError("summarization level must be >= 1")
    by_nb: dict[int, list[tuple[int, TableRow]]] = {}
    for pos, row in enumerate(rows):
        by_nb.setdefault(row.neighbor, []).append((pos, row))
    merged = []
    for items in by_nb.values():
        merged.extend(_pass_one_neighbor(items, sl, avg_degree, avg_sparseness))
    merged.sort(key=lambda x: x[0])
    return [r for _, r in merged]


def summarize_by_level(
    rows: Sequence[TableRow], sl: int, avg_degree: float, avg_sparseness: float
) -> list[TableRow]:
    """Group same-neighbour rows under common ancestors at most ``sl`` levels up.

    Levels 1..``sl`` are applied in turn and the greedy pass is repeated at
    each level until it changes nothing. Every grouping shrinks the table, so
    the result is stable under re-application and never larger than the
    result for a lower level.
    """
    if sl < 1:
        raise PreconditionError("summarization level must be >= 1")
    cur = list(rows)
    for level in range(1, sl + 1):
        cur = _fix_level(cur, level, avg_degree, avg_sparseness)
    return cur


def _fix_level(rows: list[TableRow], level: int, deg: float, sparse: float) -> list[TableRow]:
    while True:
        nxt = summarize_pass(rows, level, deg, sparse)
        if len(nxt) == len(rows):
            return rows
        rows = nxt


def _evict(rt: RoutingTable) -> None:
    victims = sorted(
        ((t.ut, -t.hop, -t.neighbor_id, onid) for onid, e in rt.entries.items() if onid not in rt.own for t in e.tuples.values()),
    )
    size = size_bytes(rt)
    for _, _, neg_nb, onid in victims:
        if size <= rt.rtb_bytes:
            break
        entry = rt.entries[onid]
        del entry.tuples[-neg_nb]
        size -= TUPLE_BYTES
        if not entry.tuples:
            del rt.entries[onid]
            size -= _entry_bytes(rt.width, 0)
        rt.evicted_tuples += 1
    rt._last_ad.clear()


def routing_table_summarization(rt: RoutingTable, params: UtilityParams | None = None) -> RoutingTable:
    """Shrink ``rt`` under its byte budget.

    Low-utility rows are summarized first at each level; high-utility rows
    only when that was not enough. If even root-level grouping leaves the
    table too large, the lowest-utility tuples are evicted.
    """
    if size_bytes(rt) <= rt.rtb_bytes:
        return rt
    if not rt.summarize:
        _evict(rt)
        return rt
    p = params or rt.params
    rt.summarization_runs += 1
    rows = rt.rows()
    hut = [r for r in rows if r.tup.ut >= p.utthr]
    lut = [r for r in rows if r.tup.ut < p.utthr]
    own = rt.own_bytes()
    deg, sparse = rt.avg_degree, rt.avg_sparseness
    max_depth = max((r.onid.depth for r in rows), default=0)

    def total() -> int:
        return own + rows_size(hut + lut, rt.width)

    sl = 0
    while total() > rt.rtb_bytes and sl < max_depth:
        sl += 1
        # both tiers are already stable at every lower level
        lut = _fix_level(lut, sl, deg, sparse)
        if total() < rt.rtb_bytes:
            break
        hut = _fix_level(hut, sl, deg, sparse)
    rt.replace_rows(hut + lut)
    if size_bytes(rt) > rt.rtb_bytes:
        _evict(rt)
    return rt


def best_neighbor(rt: RoutingTable, target: Onid) -> tuple[int, Onid] | None:
    for matched, tuples in rt.ranked(target):
        return tuples[0].neighbor_id, matched
    return None
