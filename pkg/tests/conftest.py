"""Shared scene builders and brute-force oracles."""
from __future__ import annotations

import math

import numpy as np
import pytest

from crowdvis.grouping import HierarchyNode, LinearPredicate, RangeEntry, RangeSet
from crowdvis.voldata import (
    SCALAR,
    AttributeSchema,
    GridDims,
    InstanceTable,
    RawVolume,
    SegmentationVolume,
)


def make_table(values: dict[int, dict[str, float]], attrs: list[str] | None = None) -> InstanceTable:
    """Instance table over scalar attributes only."""
    if attrs is None:
        attrs = sorted({name for row in values.values() for name in row})
    schema = AttributeSchema.from_declared([(a, SCALAR) for a in attrs])
    return InstanceTable(schema, values)


def single_node(attribute: str, bounds: list[tuple[float, float]], **entry_kw) -> HierarchyNode:
    return HierarchyNode(
        attribute=attribute,
        ranges=[RangeEntry(ranges=RangeSet.single(lo, hi), **entry_kw) for lo, hi in bounds],
    )


def catch_all_hierarchy(attribute: str, fraction: float = 1.0) -> list[HierarchyNode]:
    return [
        HierarchyNode(
            attribute=attribute,
            ranges=[
                RangeEntry(ranges=RangeSet.single(-math.inf, math.inf), fraction=fraction)
            ],
        )
    ]


def speckle_scene(rng: np.random.Generator, n: int = 16, n_instances: int = 25):
    """Random speckle segmentation with two scalar attributes per instance."""
    dims = GridDims(n, n, n)
    ids = rng.integers(0, n_instances + 1, size=dims.shape).astype(np.int32)
    raw = RawVolume(dims=dims, values=rng.random(dims.shape, dtype=np.float32))
    seg = SegmentationVolume(dims=dims, ids=ids)
    rows = {
        i: {"a": float(rng.uniform(0, 10)), "b": float(rng.uniform(0, 10))}
        for i in range(1, n_instances + 1)
    }
    table = make_table(rows, attrs=["a", "b"])
    return raw, seg, table


def random_hierarchy(rng: np.random.Generator) -> list[HierarchyNode]:
    """One or two levels over attributes a/b with random breakpoints in [0, 10]."""

    def entries(n_ranges: int, children_maker=None) -> list[RangeEntry]:
        cuts = np.sort(rng.uniform(1, 9, size=n_ranges - 1)) if n_ranges > 1 else np.array([])
        bounds = [-math.inf, *cuts.tolist(), math.inf]
        out = []
        for lo, hi in zip(bounds, bounds[1:]):
            children = children_maker() if children_maker else []
            out.append(
                RangeEntry(
                    ranges=RangeSet.single(lo, hi),
                    fraction=float(rng.uniform(0, 1)),
                    children=children,
                )
            )
        return out

    if rng.random() < 0.5:
        return [HierarchyNode(attribute="a", ranges=entries(int(rng.integers(1, 4))))]
    n_child = int(rng.integers(1, 4))
    child_cuts = np.sort(rng.uniform(1, 9, size=n_child - 1)) if n_child > 1 else np.array([])
    child_bounds = [-math.inf, *child_cuts.tolist(), math.inf]

    def make_children():
        return [
            HierarchyNode(
                attribute="b",
                ranges=[
                    RangeEntry(ranges=RangeSet.single(lo, hi), fraction=float(rng.uniform(0, 1)))
                    for lo, hi in zip(child_bounds, child_bounds[1:])
                ],
            )
        ]

    return [HierarchyNode(attribute="a", ranges=entries(int(rng.integers(1, 3)), make_children))]


def first_match_group(preds: list[LinearPredicate], table: InstanceTable, iid: int) -> int:
    """Brute-force oracle: test every predicate independently, take the minimum index."""
    satisfied = [p.group_index for p in preds if p.matches(table, iid)]
    return min(satisfied) if satisfied else 0


def sphere_ids(dims: GridDims, center, radius: float, iid: int, ids: np.ndarray) -> None:
    """Label all voxels whose center lies inside the sphere."""
    sx, sy, sz = dims.spacing
    xs = (np.arange(dims.nx) + 0.5) * sx - center[0]
    ys = (np.arange(dims.ny) + 0.5) * sy - center[1]
    zs = (np.arange(dims.nz) + 0.5) * sz - center[2]
    d2 = xs[:, None, None] ** 2 + ys[None, :, None] ** 2 + zs[None, None, :] ** 2
    ids[d2 <= radius**2] = iid


def blob_scene(dims: GridDims, spheres: list[tuple[tuple[float, float, float], float]]):
    """Spheres labelled 1..n over a zero raw volume, with a 'size' attribute."""
    ids = np.zeros(dims.shape, dtype=np.int32)
    for i, (center, radius) in enumerate(spheres, start=1):
        sphere_ids(dims, center, radius, i, ids)
    raw = RawVolume(dims=dims, values=np.zeros(dims.shape, dtype=np.float32))
    seg = SegmentationVolume(dims=dims, ids=ids)
    table = make_table({i: {"size": r} for i, (_, r) in enumerate(spheres, start=1)}, attrs=["size"])
    return raw, seg, table


@pytest.fixture(scope="session")
def small_synthetic():
    """A modest generated scene shared by read-only tests."""
    from crowdvis.synthetic import SceneSpec, generate_synthetic

    spec = SceneSpec(
        dims=GridDims(40, 40, 40), n_boxes=8, n_spheres=10, n_ellipsoids=6,
        size_range=(2.0, 4.5),
    )
    return generate_synthetic(spec, seed=123)
