"""Zipf-skewed capability assignment and query stream."""

from __future__ import annotations

import numpy as np

from ..ontology import Onid


def zipf_pmf(n: int, skew: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=float)
    w = ranks**-skew
    return w / w.sum()


class ZipfCatalog:
    """Leaves ordered by a seeded popularity permutation.

    Rank r (1-based) has probability proportional to r**-skew.  Capability
    assignment and queries share the permutation, so popular capabilities are
    both common and often requested.
    """

    def __init__(self, leaves: list[Onid], skew: float, rng: np.random.Generator):
        order = rng.permutation(len(leaves))
        self.ranked = [leaves[i] for i in order]
        self.pmf = zipf_pmf(len(leaves), skew)
        self.skew = skew

    def sample(self, rng: np.random.Generator, size: int) -> list[Onid]:
        idx = rng.choice(len(self.ranked), size=size, p=self.pmf)
        return [self.ranked[i] for i in idx]

    def restricted(self, present: set[Onid]) -> tuple[list[Onid], np.ndarray]:
        """Catalog over ``present`` only, keeping relative Zipf weights."""
        keep = [i for i, o in enumerate(self.ranked) if o in present]
        w = self.pmf[keep]
        return [self.ranked[i] for i in keep], w / w.sum()


def assign_capabilities(
    rng: np.random.Generator, n: int, fraction: float, catalog: ZipfCatalog
) -> list[frozenset[Onid]]:
    """round(fraction * n) distinct nodes each get one Zipf-drawn leaf."""
    k = max(1, round(fraction * n))
    holders = np.sort(rng.choice(n, size=k, replace=False))
    caps = catalog.sample(rng, k)
    out: list[frozenset[Onid]] = [frozenset()] * n
    for node, cap in zip(holders, caps):
        out[int(node)] = frozenset([cap])
    return out


class QueryStream:
    """Queries for capabilities that exist somewhere in the network."""

    def __init__(self, rng: np.random.Generator, n: int, catalog: ZipfCatalog, caps: list[frozenset[Onid]]):
        self.rng = rng
        self.n = n
        present = set().union(*caps) if caps else set()
        self.targets, self.p = catalog.restricted(present)

    def batch(self, size: int) -> list[tuple[int, Onid]]:
        if not self.targets or size == 0:
            return []
        src = self.rng.integers(0, self.n, size=size)
        tgt = self.rng.choice(len(self.targets), size=size, p=self.p)
        return [(int(s), self.targets[int(t)]) for s, t in zip(src, tgt)]
