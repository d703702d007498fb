"""Summarization-candidate metrics: coverage, stability, usage and utility."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import ParameterError, PreconditionError
from .ontology import Onid, is_ancestor

_EPS = 1e-9


@dataclass(frozen=True)
class UtilityParams:
    w1: float = 1.0
    w2: float = 1.0
    alpha: float = 0.5
    maxut: int = 32
    utthr: int = 16
    k_periods: int = 5
    ug_cap: int = 10
    # ablation switches; a disabled factor is pinned to its neutral value
    use_stability: bool = True
    use_coverage: bool = True

    def __post_init__(self):
        if not 0 < self.utthr < self.maxut:
            raise ParameterError("need 0 < utthr < maxut")
        if not 0 < self.alpha < 1:
            raise ParameterError("alpha must lie in (0, 1)")
        if self.k_periods < 1 or self.ug_cap < 1:
            raise ParameterError("k_periods and ug_cap must be positive")


@dataclass(frozen=True)
class CoverageEstimate:
    oc: float
    ost_size_estimate: int


@dataclass(frozen=True)
class MobilityPlan:
    node_id: int
    positions: tuple[tuple[int, float, float], ...]
    comm_range: float

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(p[0] for p in self.positions)


@dataclass(frozen=True)
class UsageState:
    ug: float = 0.0
    period_refs: int = 0

    def referenced(self, n: int = 1) -> "UsageState":
        return replace(self, period_refs=self.period_refs + n)


def _slots(width: int, sparse: float) -> int:
    return math.ceil((1 << width) * sparse - _EPS)


def estimate_ost_size(
    rst: Onid, lsc: Sequence[Onid], avg_degree: float, avg_sparseness: float
) -> int:
    """Estimate how many nodes hang below ``rst`` from the codes in ``lsc``.

    Level by level, every group of known siblings contributes
    ``max(highest position + 1, ceil(2**width * sparse))``; nodes of the level
    above with no known child are assumed to have ``avg_degree`` children.
    Nodes that are not themselves in ``lsc`` but are ancestors of members are
    treated as known.
    """
    if not lsc:
        raise PreconditionError("lsc must not be empty")
    return _ost_size(rst, frozenset(lsc), avg_degree, avg_sparseness)


@lru_cache(maxsize=1 << 16)
def _ost_size(rst: Onid, lsc: frozenset[Onid], avg_degree: float, avg_sparseness: float) -> int:
    base = rst.depth
    for x in lsc:
        if x == rst or not is_ancestor(rst, x):
            raise PreconditionError(f"{x!r} is not a strict descendant of {rst!r}")
    tl = max(x.depth for x in lsc) - base

    prev_level = 1.0
    total = 0.0
    for level in range(1, tl + 1):
        d = base + level
        known = {x.ancestor_at_depth(d) for x in lsc if x.depth >= d}
        best: dict[Onid, tuple[int, int]] = {}
        for node in known:
            value, width = node.pieces[-1]
            par = node.parent
            if par not in best or value > best[par][0]:
                best[par] = (value, width)
        term = sum(max(v + 1, _slots(w, avg_sparseness)) for v, w in best.values())
        term += (prev_level - len(best)) * avg_degree
        total += term
        prev_level = term
    return max(1, math.ceil(total - _EPS))


def ontology_coverage(lsc_entries: Iterable[tuple[Onid, float]], ost_size: int) -> float:
    if ost_size < 1:
        raise PreconditionError("ost_size must be >= 1")
    mass = 0.0
    for _, oc in lsc_entries:
        if not 0.0 <= oc <= 1.0:
            raise PreconditionError(f"coverage {oc} outside [0, 1]")
        mass += oc
    return min(1.0, mass / ost_size)


def coverage_estimate(
    rst: Onid,
    members: Sequence[tuple[Onid, float]],
    avg_degree: float,
    avg_sparseness: float,
) -> CoverageEstimate:
    """Coverage of ``rst`` when it replaces ``members``; ``rst`` itself is skipped."""
    below = [(o, oc) for o, oc in members if o != rst]
    if not below:
        # only rst itself was in the group: nothing new is claimed
        return CoverageEstimate(max((oc for _, oc in members), default=1.0), 1)
    size = estimate_ost_size(rst, [o for o, _ in below], avg_degree, avg_sparseness)
    return CoverageEstimate(ontology_coverage(below, size), size)


def overlap(plan_a: MobilityPlan, plan_b: MobilityPlan) -> int:
    """Number of shared future periods in which the two nodes are in range."""
    if plan_a.periods != plan_b.periods:
        raise PreconditionError("plans cover different period windows")
    reach = min(plan_a.comm_range, plan_b.comm_range)
    count = 0
    for (_, xa, ya), (_, xb, yb) in zip(plan_a.positions, plan_b.positions):
        if math.hypot(xa - xb, ya - yb) <= reach:
            count += 1
    return count


def stability_propagate(ov_skip: int, ov_local: int, ov_upstream_pair: int, k: int) -> int:
    """Two-hop stability of a route entry.

    ``ov_skip`` is the overlap between the receiver and the sender's upstream
    neighbour, ``ov_local`` the overlap between sender and receiver, and
    ``ov_upstream_pair`` the sender's overlap with its upstream neighbour.
    """
    for v in (ov_skip, ov_local, ov_upstream_pair):
        if not 0 <= v <= k:
            raise ParameterError(f"overlap {v} outside [0, {k}]")
    return max(ov_skip, min(ov_local, ov_upstream_pair))


def usage_update(state: UsageState, alpha: float, ug_cap: int = 10) -> UsageState:
    freq = min(1.0, state.period_refs / ug_cap)
    return UsageState(alpha * freq + (1.0 - alpha) * state.ug, 0)


def utility(stb: int, ug: float, oc: float, hop: int, params: UtilityParams) -> int:
    k = params.k_periods
    if not params.use_stability:
        stb = k
    if not params.use_coverage:
        oc = 1.0
    raw = params.w1 * (stb / k) * ug * params.maxut - params.w2 * oc * hop
    return min(params.maxut, max(0, math.floor(raw + 0.5)))


def summary_utility(member_utilities: Sequence[int]) -> int:
    if not member_utilities:
        raise PreconditionError("a summary needs at least one member")
    return max(member_utilities)


def quantize8(x: float) -> int:
    """Map a value in [0, 1] to the single byte used on the wire."""
    return min(255, max(0, math.floor(x * 255 + 0.5)))
