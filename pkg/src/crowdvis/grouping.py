"""Predicate hierarchies: authoring, linearization, group assignment and ratios.

A hierarchy node tests one scalar attribute against an ordered list of value
ranges; nesting is conjunctive, siblings are disjunctive alternatives tried in
author order. Linearization enumerates every root-to-leaf range path depth
first; the first satisfied path claims an instance, everything else falls to
the background group 0.
"""
from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HierarchyError
from .voldata import InstanceTable

GOLDEN_RATIO_CONJUGATE = 0.6180339887498949

RGBA = tuple[float, float, float, float]
# A path addresses one range entry: ((node_idx, range_idx), ...) from the roots down.
Path = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class RangeSet:
    """Disjoint half-open intervals [lo, hi) over one scalar attribute."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.intervals:
            if not lo < hi:
                raise HierarchyError(f"interval must satisfy lo < hi, got [{lo}, {hi})")
        by_lo = sorted(self.intervals)
        for (_, hi_a), (lo_b, _) in zip(by_lo, by_lo[1:]):
            if hi_a > lo_b:
                raise HierarchyError(f"intervals overlap: {by_lo}")

    @classmethod
    def single(cls, lo: float, hi: float) -> "RangeSet":
        return cls(((lo, hi),))

    def contains(self, value: float) -> bool:
        return any(lo <= value < hi for lo, hi in self.intervals)

    def contains_array(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(values.shape, dtype=bool)
        for lo, hi in self.intervals:
            out |= (values >= lo) & (values < hi)
        return out


@dataclass
class RangeEntry:
    """One range of a node, with its per-group styling and any child subtree.

    ``fraction`` is authoritative on leaves; on internal entries it is the
    displayed count-weighted average refreshed by :func:`cascade_up`.
    """

    ranges: RangeSet
    color: RGBA | None = None
    fraction: float = 1.0
    locked: bool = False
    children: list["HierarchyNode"] = field(default_factory=list)
    empty: bool = False

    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class HierarchyNode:
    attribute: str
    ranges: list[RangeEntry]


@dataclass(frozen=True)
class LinearPredicate:
    """Conjunction of attribute-range tests for one group."""

    conjuncts: tuple[tuple[str, RangeSet], ...]
    group_index: int
    color: RGBA
    visible_fraction: float
    path: Path

    def matches(self, table: InstanceTable, iid: int) -> bool:
        return all(rs.contains(table.scalar_value(iid, name)) for name, rs in self.conjuncts)

    @property
    def path_key(self) -> str:
        return path_key(self.conjuncts)


def path_key(conjuncts) -> str:
    """Stable identity of a group across hierarchy edits (attribute + bounds)."""
    parts = []
    for name, rs in conjuncts:
        ranges = ",".join(f"[{lo:g},{hi:g})" for lo, hi in rs.intervals)
        parts.append(f"{name}{ranges}")
    return "/".join(parts)


@dataclass
class GroupAssignment:
    """Instance id -> group index (0 = background), total over all instances."""

    group_of: dict[int, int]
    n_groups: int

    def lut(self, max_id: int) -> np.ndarray:
        out = np.zeros(max_id + 1, dtype=np.int32)
        for iid, k in self.group_of.items():
            if iid <= max_id:
                out[iid] = k
        return out

    def members(self, k: int) -> list[int]:
        return [i for i, g in self.group_of.items() if g == k]

    def counts(self) -> dict[int, int]:
        out = {k: 0 for k in range(self.n_groups + 1)}
        for g in self.group_of.values():
            out[g] += 1
        return out


# -- validation and linearization ---------------------------------------------


def _node_signature(node: HierarchyNode):
    return (
        node.attribute,
        tuple(
            (entry.ranges.intervals, tuple(_node_signature(c) for c in entry.children))
            for entry in node.ranges
        ),
    )


def validate_hierarchy(roots: list[HierarchyNode], table: InstanceTable | None = None) -> None:
    """Check attribute names, range sanity and child-shape parity across siblings."""
    for node in roots:
        if table is not None:
            if node.attribute not in table.schema:
                raise HierarchyError(f"unknown attribute {node.attribute!r}", field=node.attribute)
            if not table.schema.is_scalar(node.attribute):
                raise HierarchyError(
                    f"attribute {node.attribute!r} is not scalar; use its derived scalars",
                    field=node.attribute,
                )
        if not node.ranges:
            raise HierarchyError(f"node {node.attribute!r} has no ranges", field=node.attribute)
        shapes = {
            tuple(_node_signature(c) for c in entry.children) for entry in node.ranges
        }
        if len(shapes) > 1:
            raise HierarchyError(
                f"ranges of node {node.attribute!r} carry differently shaped children",
                field=node.attribute,
            )
        for entry in node.ranges:
            if not 0.0 <= entry.fraction <= 1.0:
                raise HierarchyError(
                    f"fraction {entry.fraction} outside [0, 1] under {node.attribute!r}",
                    field=node.attribute,
                )
            validate_hierarchy(entry.children, table)


def linearize(roots: list[HierarchyNode], table: InstanceTable | None = None) -> list[LinearPredicate]:
    """Depth-first expansion of all root-to-leaf range paths, in author order."""
    validate_hierarchy(roots, table)
    preds: list[LinearPredicate] = []

    def walk(nodes: list[HierarchyNode], prefix, path_prefix: Path):
        for ni, node in enumerate(nodes):
            for ri, entry in enumerate(node.ranges):
                conj = prefix + ((node.attribute, entry.ranges),)
                path = path_prefix + ((ni, ri),)
                if entry.is_leaf():
                    preds.append(
                        LinearPredicate(
                            conjuncts=conj,
                            group_index=len(preds) + 1,
                            color=entry.color if entry.color is not None else default_color(len(preds) + 1),
                            visible_fraction=entry.fraction,
                            path=path,
                        )
                    )
                else:
                    walk(entry.children, conj, path)

    walk(roots, (), ())
    return preds


def assign_groups(preds: list[LinearPredicate], table: InstanceTable) -> GroupAssignment:
    """First satisfied predicate claims the instance; otherwise background."""
    ids = table.ids
    assigned = np.zeros(len(ids), dtype=np.int32)
    for pred in preds:
        satisfied = np.ones(len(ids), dtype=bool)
        for name, rs in pred.conjuncts:
            satisfied &= rs.contains_array(table.scalar_column(name))
        take = satisfied & (assigned == 0)
        assigned[take] = pred.group_index
    return GroupAssignment(
        group_of={int(i): int(g) for i, g in zip(ids, assigned)},
        n_groups=len(preds),
    )


def default_color(k: int) -> RGBA:
    """Low-discrepancy hue from the golden-ratio sequence; fixed S/V."""
    if k < 1:
        raise ValueError(f"group index must be >= 1, got {k}")
    hue = math.modf(k * GOLDEN_RATIO_CONJUGATE)[0]
    r, g, b = colorsys.hsv_to_rgb(hue, 0.8, 0.9)
    return (r, g, b, 1.0)


# -- cascaded visibility-ratio updates ------------------------------------------


@dataclass(frozen=True)
class CascadeResult:
    status: str  # "ok" | "clamped" | "all_locked"
    achieved: float


def entry_at(roots: list[HierarchyNode], path: Path) -> RangeEntry:
    nodes = roots
    entry: RangeEntry | None = None
    for ni, ri in path:
        try:
            entry = nodes[ni].ranges[ri]
        except IndexError:
            raise HierarchyError(f"no range entry at path {path}") from None
        nodes = entry.children
    if entry is None:
        raise HierarchyError("empty path")
    return entry


def leaf_paths(roots: list[HierarchyNode]) -> list[Path]:
    """Leaf paths in linearization order (index i maps to group i+1)."""
    out: list[Path] = []

    def walk(nodes: list[HierarchyNode], prefix: Path):
        for ni, node in enumerate(nodes):
            for ri, entry in enumerate(node.ranges):
                path = prefix + ((ni, ri),)
                if entry.is_leaf():
                    out.append(path)
                else:
                    walk(entry.children, path)

    walk(roots, ())
    return out


def _subtree_count(entry: RangeEntry, path: Path, counts: dict[Path, int]) -> int:
    if entry.is_leaf():
        return counts.get(path, 0)
    total = 0
    for ni, node in enumerate(entry.children):
        for ri, e in enumerate(node.ranges):
            total += _subtree_count(e, path + ((ni, ri),), counts)
    return total


@dataclass(frozen=True)
class _CascadeUnit:
    path: Path
    entry: RangeEntry
    weight: int
    locked: bool


def _units_under(
    roots: list[HierarchyNode], path: Path, counts: dict[Path, int]
) -> list[_CascadeUnit]:
    """Adjustable units below a target: unlocked leaves, plus locked entries
    kept whole (a locked internal entry shields its entire subtree)."""
    entry = entry_at(roots, path)
    if entry.is_leaf() or entry.locked:
        return [_CascadeUnit(path, entry, _subtree_count(entry, path, counts), entry.locked)]
    out: list[_CascadeUnit] = []

    def walk(nodes: list[HierarchyNode], prefix: Path):
        for ni, node in enumerate(nodes):
            for ri, e in enumerate(node.ranges):
                p = prefix + ((ni, ri),)
                if e.locked or e.is_leaf():
                    out.append(_CascadeUnit(p, e, _subtree_count(e, p, counts), e.locked))
                else:
                    walk(e.children, p)

    walk(entry.children, path)
    return out


def cascade_up(roots: list[HierarchyNode], counts: dict[Path, int]) -> None:
    """Refresh internal displayed fractions as count-weighted leaf averages.

    Entries over zero member instances display 0 and are flagged empty.
    """

    def walk(nodes: list[HierarchyNode], prefix: Path) -> tuple[float, int]:
        weighted, total = 0.0, 0
        for ni, node in enumerate(nodes):
            for ri, entry in enumerate(node.ranges):
                path = prefix + ((ni, ri),)
                if entry.is_leaf():
                    w = counts.get(path, 0)
                else:
                    sub_weighted, w = walk(entry.children, path)
                    entry.fraction = sub_weighted / w if w > 0 else 0.0
                entry.empty = w == 0
                weighted += entry.fraction * w
                total += w
        return weighted, total

    walk(roots, ())


def cascade_down(
    roots: list[HierarchyNode],
    path: Path,
    fraction: float,
    counts: dict[Path, int],
) -> CascadeResult:
    """Set a subtree's visible fraction by adjusting its unlocked leaves.

    With no locked leaves below, every unlocked leaf takes ``fraction``.
    Otherwise the shared unlocked value solving the count-weighted average is
    used, clamped to [0, 1]; ancestors are then recomputed, so the displayed
    value reflects what was actually achievable.
    """
    if not 0.0 <= fraction <= 1.0:
        raise HierarchyError(f"fraction {fraction} outside [0, 1]")
    units = _units_under(roots, path, counts)
    unlocked = [u for u in units if not u.locked]
    if not unlocked:
        return CascadeResult(status="all_locked", achieved=entry_at(roots, path).fraction)

    locked = [u for u in units if u.locked]
    if not locked:
        value = fraction
    else:
        total_w = sum(u.weight for u in units)
        locked_sum = sum(u.weight * u.entry.fraction for u in locked)
        unlocked_w = sum(u.weight for u in unlocked)
        value = (fraction * total_w - locked_sum) / unlocked_w if unlocked_w > 0 else fraction
    clamped = not 0.0 <= value <= 1.0
    value = min(1.0, max(0.0, value))
    for u in unlocked:
        u.entry.fraction = value
    cascade_up(roots, counts)
    return CascadeResult(
        status="clamped" if clamped else "ok",
        achieved=entry_at(roots, path).fraction,
    )


# -- scented-slider histograms ---------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    attribute: str
    lo: float | None
    hi: float | None
    counts: tuple[int, ...]

    @property
    def empty(self) -> bool:
        return not self.counts


def group_histogram(
    table: InstanceTable,
    assignment: GroupAssignment,
    k: int,
    attribute: str,
    bins: int,
) -> Histogram:
    """Equal-width histogram of one scalar attribute over group ``k``'s members."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    members = [i for i in table.ids_list() if assignment.group_of.get(i, 0) == k]
    if not members:
        return Histogram(attribute=attribute, lo=None, hi=None, counts=())
    values = np.array([table.scalar_value(i, attribute) for i in members], dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    counts = [0] * bins
    if hi > lo:
        idx = np.minimum(((values - lo) / (hi - lo) * bins).astype(int), bins - 1)
    else:
        idx = np.zeros(len(values), dtype=int)
    for i in idx:
        counts[int(i)] += 1
    return Histogram(attribute=attribute, lo=lo, hi=hi, counts=tuple(counts))


# -- hierarchy JSON wire format ---------------------------------------------------


def _interval_to_json(lo: float, hi: float):
    return [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]


def hierarchy_to_json(roots: list[HierarchyNode]) -> dict:
    def node_to_json(node: HierarchyNode) -> dict:
        ranges = []
        for entry in node.ranges:
            (lo, hi), *rest = entry.ranges.intervals
            item: dict = {
                "lo": _interval_to_json(lo, hi)[0],
                "hi": _interval_to_json(lo, hi)[1],
                "color": list(entry.color) if entry.color is not None else None,
                "fraction": entry.fraction,
                "locked": entry.locked,
                "children": [node_to_json(c) for c in entry.children],
            }
            if rest:
                item["intervals"] = [_interval_to_json(lo2, hi2) for lo2, hi2 in entry.ranges.intervals]
            if entry.empty:
                item["empty"] = True
            ranges.append(item)
        return {"attribute": node.attribute, "ranges": ranges}

    return {"roots": [node_to_json(n) for n in roots]}


def hierarchy_from_json(doc: dict | list) -> list[HierarchyNode]:
    """Parse the hierarchy document; accepts a single node or a {"roots": [...]} list."""

    def parse_bound(v, default: float) -> float:
        return default if v is None else float(v)

    def parse_node(obj: dict) -> HierarchyNode:
        if not isinstance(obj, dict) or "attribute" not in obj:
            raise HierarchyError("hierarchy node needs an 'attribute' field")
        ranges_doc = obj.get("ranges")
        if not isinstance(ranges_doc, list) or not ranges_doc:
            raise HierarchyError(f"node {obj.get('attribute')!r} needs a non-empty 'ranges' list")
        entries = []
        for r in ranges_doc:
            if "intervals" in r:
                intervals = tuple(
                    (parse_bound(lo, -math.inf), parse_bound(hi, math.inf)) for lo, hi in r["intervals"]
                )
                rs = RangeSet(intervals)
            else:
                rs = RangeSet.single(parse_bound(r.get("lo"), -math.inf), parse_bound(r.get("hi"), math.inf))
            color = r.get("color")
            entries.append(
                RangeEntry(
                    ranges=rs,
                    color=tuple(float(c) for c in color) if color is not None else None,  # type: ignore[arg-type]
                    fraction=float(r.get("fraction", 1.0)) if r.get("fraction") is not None else 1.0,
                    locked=bool(r.get("locked", False)),
                    children=[parse_node(c) for c in r.get("children", [])],
                )
            )
        return HierarchyNode(attribute=str(obj["attribute"]), ranges=entries)

    if isinstance(doc, dict) and "roots" in doc:
        nodes = [parse_node(n) for n in doc["roots"]]
    elif isinstance(doc, list):
        nodes = [parse_node(n) for n in doc]
    else:
        nodes = [parse_node(doc)]  # single-root document
    return nodes
