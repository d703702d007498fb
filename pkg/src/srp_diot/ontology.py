"""Capability ontologies and the ONID coding scheme.

An ONID is a pair of fixed-width bit vectors.  The ID vector concatenates,
root to node, the position of each node in its parent's child list; the SP
vector has a ``1`` at the first bit of every such piece.  Because both vectors
are zero padded, the end of the last piece is not recoverable from the two
vectors alone, so an :class:`Onid` also carries ``length``, the number of used
bits.  Every structural query (parent, depth, common ancestor) works on the
codes alone, without the tree.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from operator import itemgetter
from pathlib import Path
from typing import Sequence

from .errors import (
    MalformedOnidError,
    OntologyFileError,
    ParameterError,
    WidthOverflowError,
)

# Weighted choice over 2..8 children; skewed towards small fan-out so that the
# node/leaf ratio lands near 186/112.
DEFAULT_DEGREE_RANGE = (2, 8)
DEFAULT_DEGREE_WEIGHTS = (0.70, 0.17, 0.06, 0.03, 0.02, 0.01, 0.01)
DEFAULT_LEAF_PROB = 0.3


def sibling_width(n_children: int) -> int:
    """Bits needed to number ``n_children`` siblings, i.e. ceil(log2(n))."""
    if n_children < 1:
        raise ParameterError("a parent has at least one child")
    return (n_children - 1).bit_length()


# one shared object per code, so ancestor chains and table keys hit identity checks
_INTERN: "dict[Onid, Onid]" = {}


class Onid(tuple):
    """An (id_bits, sp_bits, width, length) code; hashes, compares and orders as a tuple."""

    def __new__(cls, id_bits: int, sp_bits: int, width: int, length: int):
        w, n = width, length
        if w <= 0:
            raise MalformedOnidError(f"width must be positive, got {w}")
        if not 1 <= n <= w:
            raise MalformedOnidError(f"used length {n} outside 1..{w}")
        top = 1 << w
        if not (0 <= id_bits < top and 0 <= sp_bits < top):
            raise MalformedOnidError("bit vector wider than the declared width")
        pad_mask = (1 << (w - n)) - 1
        if id_bits & pad_mask or sp_bits & pad_mask:
            raise MalformedOnidError("padding bits must be zero")
        if not (sp_bits >> (w - 1)) & 1:
            raise MalformedOnidError("SP vector has no root piece marker")
        if n > 1 and not (sp_bits >> (w - 2)) & 1:
            raise MalformedOnidError("root piece must be exactly one bit")
        if id_bits >> (w - 1):
            raise MalformedOnidError("root piece must be 0")
        return tuple.__new__(cls, (id_bits, sp_bits, width, length))

    def __getnewargs__(self):
        return tuple(self)

    id_bits = property(itemgetter(0))
    sp_bits = property(itemgetter(1))
    width = property(itemgetter(2))
    length = property(itemgetter(3))

    @classmethod
    def root(cls, width: int) -> "Onid":
        return cls(0, 1 << (width - 1), width, 1)

    @classmethod
    def from_pieces(cls, pieces: Sequence[tuple[int, int]], width: int) -> "Onid":
        id_v = sp_v = used = 0
        for value, bits in pieces:
            if bits < 1 or not 0 <= value < (1 << bits):
                raise MalformedOnidError(f"bad piece ({value}, {bits})")
            id_v = (id_v << bits) | value
            sp_v = (sp_v << bits) | (1 << (bits - 1))
            used += bits
        if not pieces:
            raise MalformedOnidError("an ONID has at least the root piece")
        if used > width:
            raise WidthOverflowError(f"code needs {used} bits, width is {width}")
        shift = width - used
        return cls(id_v << shift, sp_v << shift, width, used)

    @cached_property
    def pieces(self) -> tuple[tuple[int, int], ...]:
        w, n = self.width, self.length
        starts = [i for i in range(n) if (self.sp_bits >> (w - 1 - i)) & 1]
        bounds = starts + [n]
        out = []
        for a, b in zip(bounds, bounds[1:]):
            out.append(((self.id_bits >> (w - b)) & ((1 << (b - a)) - 1), b - a))
        return tuple(out)

    @cached_property
    def depth(self) -> int:
        return len(self.pieces) - 1

    @property
    def is_root(self) -> bool:
        return self.length == 1

    @cached_property
    def parent(self) -> "Onid | None":
        if self.is_root:
            return None
        p = Onid.from_pieces(self.pieces[:-1], self.width)
        # share one object per code so ancestor chains hit dict identity checks
        return _INTERN.setdefault(p, p)

    @cached_property
    def ancestors(self) -> tuple["Onid", ...]:
        """This code followed by every ancestor, nearest first, ending at the root."""
        chain = [self]
        while chain[-1].parent is not None:
            chain.append(chain[-1].parent)
        return tuple(chain)

    def ancestor_at_depth(self, d: int) -> "Onid":
        return self.ancestors[self.depth - d]

    def bit_strings(self) -> tuple[str, str]:
        """Unpadded ID and SP vectors as '0'/'1' strings."""
        shift = self.width - self.length
        fmt = f"0{self.length}b"
        return format(self.id_bits >> shift, fmt), format(self.sp_bits >> shift, fmt)

    @property
    def id_hex(self) -> str:
        return format(self.id_bits, f"0{(self.width + 3) // 4}x")

    @property
    def sp_hex(self) -> str:
        return format(self.sp_bits, f"0{(self.width + 3) // 4}x")

    @property
    def nbytes(self) -> int:
        """Wire size of the ID and SP vectors together."""
        return 2 * ((self.width + 7) // 8)

    def __repr__(self) -> str:
        ids, sps = self.bit_strings()
        return f"Onid({ids}/{sps})"


def level_pieces(onid: Onid) -> list[tuple[int, int]]:
    return list(onid.pieces)


def parent_onid(onid: Onid) -> Onid | None:
    return onid.parent


def depth(onid: Onid) -> int:
    return onid.depth


def sibling_id(onid: Onid) -> tuple[int, int]:
    return onid.pieces[-1]


def is_ancestor(a: Onid, b: Onid) -> bool:
    """True when ``a`` is ``b`` or one of its ancestors."""
    if a.width != b.width:
        raise MalformedOnidError("codes of different widths")
    pa, pb = a.pieces, b.pieces
    return len(pa) <= len(pb) and pb[: len(pa)] == pa


def common_ancestor(a: Onid, b: Onid) -> tuple[Onid, int, int]:
    """Deepest shared ancestor and the number of levels from each code up to it."""
    if a.width != b.width:
        raise MalformedOnidError("codes of different widths")
    if a == b:
        return a, 0, 0
    pa, pb = a.pieces, b.pieces
    m = 0
    for x, y in zip(pa, pb):
        if x != y:
            break
        m += 1
    # the root piece is always shared by well-formed codes
    anc = a.ancestors[len(pa) - m]
    return anc, len(pa) - m, len(pb) - m


@dataclass(frozen=True)
class OntologyNode:
    node_index: int
    parent_index: int | None
    child_indices: tuple[int, ...]
    label: str = ""

    @property
    def is_leaf(self) -> bool:
        return not self.child_indices


class OntologyTree:
    """An immutable capability taxonomy plus the statistics ONID estimation needs."""

    def __init__(
        self,
        nodes: Sequence[OntologyNode],
        avg_degree: float | None = None,
        avg_sparseness: float | None = None,
        onid_width_bits: int | None = None,
    ):
        self.nodes = tuple(nodes)
        self._check_structure()
        internal = [n for n in self.nodes if not n.is_leaf]
        degs = [len(n.child_indices) for n in internal]
        if avg_degree is None:
            avg_degree = sum(degs) / len(degs) if degs else 0.0
        if avg_sparseness is None:
            sp = [d / (1 << sibling_width(d)) for d in degs]
            avg_sparseness = sum(sp) / len(sp) if sp else 1.0
        need = max(self._unpadded_lengths)
        if onid_width_bits is None:
            onid_width_bits = 8 * math.ceil(need / 8)
        if onid_width_bits < need:
            raise WidthOverflowError(
                f"width {onid_width_bits} cannot hold {need}-bit codes"
            )
        self.avg_degree = float(avg_degree)
        self.avg_sparseness = float(avg_sparseness)
        self.onid_width_bits = int(onid_width_bits)
        self._onids: tuple[Onid, ...] | None = None
        self._by_onid: dict[Onid, int] | None = None

    def _check_structure(self):
        if not self.nodes:
            raise ParameterError("an ontology has at least one node")
        roots = [n for n in self.nodes if n.parent_index is None]
        if len(roots) != 1 or roots[0].node_index != 0:
            raise ParameterError("exactly one root, with index 0, is required")
        for i, n in enumerate(self.nodes):
            if n.node_index != i:
                raise ParameterError(f"node {i} carries index {n.node_index}")
            if len(n.child_indices) == 1:
                raise ParameterError(f"node {i} has a single child")
            for c in n.child_indices:
                if self.nodes[c].parent_index != i:
                    raise ParameterError(f"child {c} does not point back to {i}")
        seen = {0}
        queue = deque([0])
        lengths = {0: 1}
        while queue:
            i = queue.popleft()
            kids = self.nodes[i].child_indices
            w = sibling_width(len(kids)) if kids else 0
            for c in kids:
                if c in seen:
                    raise ParameterError(f"node {c} reached twice")
                seen.add(c)
                lengths[c] = lengths[i] + w
                queue.append(c)
        if len(seen) != len(self.nodes):
            raise ParameterError("ontology is not connected")
        self._unpadded_lengths = [lengths[i] for i in range(len(self.nodes))]

    # --- structure -----------------------------------------------------
    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> OntologyNode:
        return self.nodes[0]

    def leaves(self) -> list[int]:
        return [n.node_index for n in self.nodes if n.is_leaf]

    def parent(self, i: int) -> int | None:
        return self.nodes[i].parent_index

    def position(self, i: int) -> int:
        p = self.nodes[i].parent_index
        return 0 if p is None else self.nodes[p].child_indices.index(i)

    def path(self, i: int) -> list[int]:
        """Node indices from the root down to ``i``."""
        out = [i]
        while self.nodes[out[-1]].parent_index is not None:
            out.append(self.nodes[out[-1]].parent_index)
        return out[::-1]

    def node_depth(self, i: int) -> int:
        return len(self.path(i)) - 1

    # --- codes ---------------------------------------------------------
    @property
    def onids(self) -> tuple[Onid, ...]:
        if self._onids is None:
            w = self.onid_width_bits
            codes: list[Onid | None] = [None] * len(self.nodes)
            codes[0] = Onid.root(w)
            piece_lists = {0: ((0, 1),)}
            queue = deque([0])
            while queue:
                i = queue.popleft()
                kids = self.nodes[i].child_indices
                if not kids:
                    continue
                bits = sibling_width(len(kids))
                for pos, c in enumerate(kids):
                    piece_lists[c] = piece_lists[i] + ((pos, bits),)
                    codes[c] = Onid.from_pieces(piece_lists[c], w)
                    queue.append(c)
            self._onids = tuple(_INTERN.setdefault(c, c) for c in codes)  # type: ignore[arg-type]
        return self._onids

    def index_of(self, onid: Onid) -> int:
        if self._by_onid is None:
            self._by_onid = {o: i for i, o in enumerate(self.onids)}
        return self._by_onid[onid]

    def leaf_onids(self) -> list[Onid]:
        return [self.onids[i] for i in self.leaves()]


def encode(tree: OntologyTree, node_index: int) -> Onid:
    if not 0 <= node_index < len(tree):
        raise ParameterError(f"no ontology node {node_index}")
    return tree.onids[node_index]


def tree_from_parents(
    parents: Sequence[int | None],
    labels: Sequence[str] | None = None,
    **stats,
) -> OntologyTree:
    """Build a tree from a parent array; children keep ascending index order."""
    kids: list[list[int]] = [[] for _ in parents]
    for i, p in enumerate(parents):
        if p is not None:
            kids[p].append(i)
    labels = labels or [f"N{i}" for i in range(len(parents))]
    nodes = [
        OntologyNode(i, parents[i], tuple(kids[i]), labels[i]) for i in range(len(parents))
    ]
    return OntologyTree(nodes, **stats)


def generate_ontology(
    seed: int,
    target_leaf_count: int,
    degree_range: tuple[int, int] = DEFAULT_DEGREE_RANGE,
    degree_weights: Sequence[float] = DEFAULT_DEGREE_WEIGHTS,
    leaf_prob: float = DEFAULT_LEAF_PROB,
) -> OntologyTree:
    """Grow a random ontology breadth-first until it has ``target_leaf_count`` leaves.

    Each dequeued node either closes as a leaf (probability ``leaf_prob``) or
    receives a weighted-random number of children.  Fan-out is clipped near the
    end so the leaf count lands exactly on the target.
    """
    lo, hi = degree_range
    if target_leaf_count < 1:
        raise ParameterError("target_leaf_count must be >= 1")
    if not 2 <= lo <= hi <= 8:
        raise ParameterError(f"degree range {degree_range} outside [2, 8]")
    weights = list(degree_weights)
    if not weights or len(weights) != hi - lo + 1:
        raise ParameterError("degree_weights must give one weight per degree")
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ParameterError("degree_weights must be non-negative with positive sum")
    if not 0 <= leaf_prob < 1:
        raise ParameterError("leaf_prob must be in [0, 1)")

    rng = random.Random(seed)
    degrees = list(range(lo, hi + 1))
    parents: list[int | None] = [None]
    queue = deque([0])
    closed_leaves = 0
    while queue:
        cur = queue.popleft()
        if closed_leaves + len(queue) + 1 >= target_leaf_count:
            break
        must_expand = not queue
        if not must_expand and rng.random() < leaf_prob:
            closed_leaves += 1
            continue
        d = rng.choices(degrees, weights)[0]
        d = max(2, min(d, target_leaf_count - closed_leaves - len(queue)))
        for _ in range(d):
            parents.append(cur)
            queue.append(len(parents) - 1)
    return tree_from_parents(parents)


# --- file format -------------------------------------------------------
def format_ontology(tree: OntologyTree) -> str:
    lines = [f"{tree.onid_width_bits} {tree.avg_degree!r} {tree.avg_sparseness!r}"]
    for n in tree.nodes:
        parent = "-" if n.parent_index is None else str(n.parent_index)
        label = n.label or f"N{n.node_index}"
        lines.append(f"{n.node_index} {parent} {tree.position(n.node_index)} {label}")
    return "\n".join(lines) + "\n"


def write_ontology_file(tree: OntologyTree, path: str | Path) -> None:
    Path(path).write_text(format_ontology(tree), encoding="utf-8")


def parse_ontology(text: str) -> OntologyTree:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise OntologyFileError(1, "missing header 'W avg_degree avg_sparseness'")
    head = lines[0].split(" ")
    if len(head) != 3:
        raise OntologyFileError(1, "header needs exactly three fields")
    try:
        width, avg_deg, avg_sparse = int(head[0]), float(head[1]), float(head[2])
    except ValueError as exc:
        raise OntologyFileError(1, f"bad header value: {exc}") from None

    entries: dict[int, tuple[int | None, int, str, int]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(" ", 3)
        if len(parts) != 4:
            raise OntologyFileError(lineno, "expected 'index parent position label'")
        try:
            idx = int(parts[0])
            parent = None if parts[1] == "-" else int(parts[1])
            pos = int(parts[2])
        except ValueError as exc:
            raise OntologyFileError(lineno, str(exc)) from None
        if idx in entries:
            raise OntologyFileError(lineno, f"duplicate node {idx}")
        entries[idx] = (parent, pos, parts[3], lineno)
    if not entries:
        raise OntologyFileError(len(lines) + 1, "no nodes")

    n = len(entries)
    if sorted(entries) != list(range(n)):
        raise OntologyFileError(len(lines), "node indices must be 0..n-1")
    kids: dict[int, dict[int, int]] = {i: {} for i in range(n)}
    for idx, (parent, pos, _, lineno) in entries.items():
        if parent is None:
            continue
        if parent not in kids:
            raise OntologyFileError(lineno, f"unknown parent {parent}")
        if pos in kids[parent]:
            raise OntologyFileError(lineno, f"position {pos} used twice under {parent}")
        kids[parent][pos] = idx
    nodes = []
    for idx in range(n):
        parent, _, label, lineno = entries[idx]
        slots = kids[idx]
        if sorted(slots) != list(range(len(slots))):
            raise OntologyFileError(lineno, f"child positions of {idx} are not contiguous")
        nodes.append(OntologyNode(idx, parent, tuple(slots[p] for p in range(len(slots))), label))
    try:
        return OntologyTree(nodes, avg_deg, avg_sparse, width)
    except (ParameterError, WidthOverflowError) as exc:
        raise OntologyFileError(len(lines), str(exc)) from None


def read_ontology_file(path: str | Path) -> OntologyTree:
    return parse_ontology(Path(path).read_text(encoding="utf-8"))

