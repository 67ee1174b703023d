"""Hierarchy linearization, first-match assignment, colors, cascades, histograms."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import first_match_group, make_table, random_hierarchy, single_node, speckle_scene
from crowdvis.errors import HierarchyError
from crowdvis.grouping import (
    GOLDEN_RATIO_CONJUGATE,
    HierarchyNode,
    RangeEntry,
    RangeSet,
    assign_groups,
    cascade_down,
    cascade_up,
    default_color,
    entry_at,
    group_histogram,
    hierarchy_from_json,
    hierarchy_to_json,
    leaf_paths,
    linearize,
)


class TestRangeSet:
    def test_half_open_semantics(self):
        rs = RangeSet.single(0.0, 10.0)
        assert rs.contains(0.0)
        assert rs.contains(9.999)
        assert not rs.contains(10.0)

    def test_rejects_empty_interval(self):
        with pytest.raises(HierarchyError):
            RangeSet.single(5.0, 5.0)

    def test_rejects_overlap(self):
        with pytest.raises(HierarchyError):
            RangeSet(((0.0, 5.0), (4.0, 8.0)))

    def test_union_of_disjoint_intervals(self):
        rs = RangeSet(((0.0, 2.0), (5.0, 7.0)))
        assert rs.contains(1.0) and rs.contains(6.0)
        assert not rs.contains(3.0)


class TestLinearize:
    def test_two_by_two_order(self):
        table = make_table({1: {"volume": 1.0, "orientation.polar": 10.0}})
        child = single_node("orientation.polar", [(0.0, 45.0), (45.0, 90.0)])
        roots = [
            HierarchyNode(
                attribute="volume",
                ranges=[
                    RangeEntry(ranges=RangeSet.single(0.0, 10.0), children=[child]),
                    RangeEntry(
                        ranges=RangeSet.single(10.0, math.inf),
                        children=[single_node("orientation.polar", [(0.0, 45.0), (45.0, 90.0)])],
                    ),
                ],
            )
        ]
        preds = linearize(roots, table)
        assert len(preds) == 4
        expected = [
            (("volume", (0.0, 10.0)), ("orientation.polar", (0.0, 45.0))),
            (("volume", (0.0, 10.0)), ("orientation.polar", (45.0, 90.0))),
            (("volume", (10.0, math.inf)), ("orientation.polar", (0.0, 45.0))),
            (("volume", (10.0, math.inf)), ("orientation.polar", (45.0, 90.0))),
        ]
        got = [
            tuple((name, rs.intervals[0]) for name, rs in p.conjuncts) for p in preds
        ]
        assert got == expected
        assert [p.group_index for p in preds] == [1, 2, 3, 4]

    def test_single_node_single_range(self):
        table = make_table({1: {"a": 0.0}})
        preds = linearize([single_node("a", [(0.0, 1.0)])], table)
        assert len(preds) == 1
        assert len(preds[0].conjuncts) == 1

    def test_three_by_three_yields_nine(self):
        table = make_table({1: {"volume": 1.0, "orientation.polar": 10.0}})

        def ori():
            return [single_node("orientation.polar", [(0.0, 30.0), (30.0, 60.0), (60.0, 90.0)])]

        roots = [
            HierarchyNode(
                attribute="volume",
                ranges=[
                    RangeEntry(ranges=RangeSet.single(0.0, 10.0), children=ori()),
                    RangeEntry(ranges=RangeSet.single(10.0, 100.0), children=ori()),
                    RangeEntry(ranges=RangeSet.single(100.0, math.inf), children=ori()),
                ],
            )
        ]
        assert len(linearize(roots, table)) == 9

    def test_empty_hierarchy(self):
        assert linearize([]) == []

    def test_unknown_attribute_rejected(self):
        table = make_table({1: {"a": 0.0}})
        with pytest.raises(HierarchyError, match="unknown attribute"):
            linearize([single_node("nope", [(0.0, 1.0)])], table)

    def test_shape_parity_enforced(self):
        table = make_table({1: {"a": 0.0, "b": 0.0}})
        roots = [
            HierarchyNode(
                attribute="a",
                ranges=[
                    RangeEntry(
                        ranges=RangeSet.single(0.0, 1.0),
                        children=[single_node("b", [(0.0, 1.0)])],
                    ),
                    RangeEntry(ranges=RangeSet.single(1.0, 2.0)),  # missing child copy
                ],
            )
        ]
        with pytest.raises(HierarchyError, match="differently shaped"):
            linearize(roots, table)

    def test_uniform_tree_count_is_product(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            _, _, table = speckle_scene(rng, n=4, n_instances=5)
            roots = random_hierarchy(rng)
            n_leaves = len(leaf_paths(roots))
            assert len(linearize(roots, table)) == n_leaves


class TestAssignGroups:
    def test_first_match_on_overlapping_predicates(self):
        table = make_table({1: {"a": 5.0}})
        roots = [
            single_node("a", [(100.0, 200.0)]),
            single_node("a", [(0.0, 10.0)]),
            single_node("a", [(0.0, 10.0)]),
        ]
        preds = linearize(roots, table)
        assignment = assign_groups(preds, table)
        assert assignment.group_of[1] == 2  # satisfies 2 and 3; 2 is evaluated first

    def test_no_match_goes_to_background(self):
        table = make_table({1: {"a": 50.0}})
        preds = linearize([single_node("a", [(0.0, 10.0)])], table)
        assert assign_groups(preds, table).group_of[1] == 0

    def test_totality(self):
        rng = np.random.default_rng(11)
        _, _, table = speckle_scene(rng, n=4, n_instances=40)
        preds = linearize(random_hierarchy(rng), table)
        assignment = assign_groups(preds, table)
        assert set(assignment.group_of) == set(table.ids_list())

    def test_permuting_predicates_only_moves_multi_satisfying_instances(self):
        rng = np.random.default_rng(21)
        rows = {i: {"a": float(rng.uniform(0, 10))} for i in range(1, 101)}
        table = make_table(rows, attrs=["a"])
        bounds = [(0.0, 6.0), (3.0, 8.0), (5.0, 10.0)]  # overlapping
        base = linearize([single_node("a", bounds)], table)
        permuted = linearize([single_node("a", [bounds[2], bounds[0], bounds[1]])], table)
        got_base = assign_groups(base, table)
        got_perm = assign_groups(permuted, table)
        for iid in table.ids_list():
            n_satisfied = sum(p.matches(table, iid) for p in base)
            key_base = base[got_base.group_of[iid] - 1].path_key if got_base.group_of[iid] else None
            key_perm = (
                permuted[got_perm.group_of[iid] - 1].path_key if got_perm.group_of[iid] else None
            )
            if n_satisfied <= 1:
                assert key_base == key_perm  # same predicate (or background) either way

    def test_fuzz_matches_min_satisfied_index_oracle(self):
        rng = np.random.default_rng(77)
        rows = {i: {"a": float(rng.uniform(0, 10)), "b": float(rng.uniform(0, 10))} for i in range(1, 201)}
        table = make_table(rows, attrs=["a", "b"])

        def ori():
            return [single_node("b", [(0.0, 3.0), (3.0, 6.0), (6.0, 10.0)])]

        roots = [
            HierarchyNode(
                attribute="a",
                ranges=[
                    RangeEntry(ranges=RangeSet.single(0.0, 4.0), children=ori()),
                    RangeEntry(ranges=RangeSet.single(2.0, 8.0), children=ori()),  # overlaps!
                    RangeEntry(ranges=RangeSet.single(5.0, 10.0), children=ori()),
                ],
            )
        ]
        preds = linearize(roots, table)
        assert len(preds) == 9
        assignment = assign_groups(preds, table)
        for iid in table.ids_list():
            assert assignment.group_of[iid] == first_match_group(preds, table, iid)


class TestDefaultColor:
    def test_hue_against_high_precision_oracle(self):
        import colorsys

        import mpmath as mp

        mp.mp.dps = 50
        for k in (1, 2, 7, 100, 1000):
            expected_hue = float(mp.frac(k * mp.mpf(GOLDEN_RATIO_CONJUGATE)))
            got = default_color(k)
            expected = colorsys.hsv_to_rgb(expected_hue, 0.8, 0.9)
            np.testing.assert_allclose(got[:3], expected, atol=1e-9)
        assert default_color(1)[3] == 1.0

    def test_first_two_hues_frozen(self):
        # fract(1 * phi_conj) and fract(2 * phi_conj)
        import colorsys

        np.testing.assert_allclose(
            default_color(1)[:3], colorsys.hsv_to_rgb(0.6180339887498949, 0.8, 0.9), atol=1e-12
        )
        np.testing.assert_allclose(
            default_color(2)[:3], colorsys.hsv_to_rgb(0.2360679774997898, 0.8, 0.9), atol=1e-12
        )

    def test_consecutive_hue_step_is_conjugate(self):
        def hue(k):
            return math.modf(k * GOLDEN_RATIO_CONJUGATE)[0]

        for k in range(1, 1001):
            step = (hue(k + 1) - hue(k)) % 1.0
            assert step == pytest.approx(GOLDEN_RATIO_CONJUGATE, abs=1e-9)

    def test_first_twelve_hues_well_separated(self):
        hues = [math.modf(k * GOLDEN_RATIO_CONJUGATE)[0] for k in range(1, 13)]
        for i in range(12):
            for j in range(i + 1, 12):
                d = abs(hues[i] - hues[j])
                assert min(d, 1.0 - d) > 0.05


def two_child_tree(size_a: int, size_b: int, f_a=1.0, f_b=1.0, locked_b=False):
    """Root 'a' with one range containing a child node of two leaf ranges."""
    child = HierarchyNode(
        attribute="b",
        ranges=[
            RangeEntry(ranges=RangeSet.single(0.0, 5.0), fraction=f_a),
            RangeEntry(ranges=RangeSet.single(5.0, 10.0), fraction=f_b, locked=locked_b),
        ],
    )
    roots = [
        HierarchyNode(
            attribute="a",
            ranges=[RangeEntry(ranges=RangeSet.single(-math.inf, math.inf), children=[child])],
        )
    ]
    counts = {
        ((0, 0), (0, 0)): size_a,
        ((0, 0), (0, 1)): size_b,
    }
    return roots, counts


class TestCascades:
    def test_uniform_down(self):
        roots, counts = two_child_tree(1, 1)
        result = cascade_down(roots, ((0, 0),), 0.5, counts)
        assert result.status == "ok"
        assert entry_at(roots, ((0, 0), (0, 0))).fraction == 0.5
        assert entry_at(roots, ((0, 0), (0, 1))).fraction == 0.5
        assert result.achieved == pytest.approx(0.5)

    def test_weighted_solve_with_locked_leaf(self):
        # sizes 3 and 1, B locked at 0, parent -> 0.6 solves A = 0.8
        roots, counts = two_child_tree(3, 1, f_b=0.0, locked_b=True)
        result = cascade_down(roots, ((0, 0),), 0.6, counts)
        assert result.status == "ok"
        assert entry_at(roots, ((0, 0), (0, 0))).fraction == pytest.approx(0.8)
        assert entry_at(roots, ((0, 0), (0, 1))).fraction == 0.0
        assert result.achieved == pytest.approx(0.6)

    def test_clamp_then_recompute_upward(self):
        # equal sizes, one child locked at 0, parent -> 1.0 clamps to 1, achieves 0.5
        roots, counts = two_child_tree(1, 1, f_b=0.0, locked_b=True)
        result = cascade_down(roots, ((0, 0),), 1.0, counts)
        assert result.status == "clamped"
        assert entry_at(roots, ((0, 0), (0, 0))).fraction == 1.0
        assert result.achieved == pytest.approx(0.5)
        assert entry_at(roots, ((0, 0),)).fraction == pytest.approx(0.5)

    def test_all_locked_is_noop_with_warning(self):
        roots, counts = two_child_tree(1, 1, f_a=0.3, f_b=0.7, locked_b=True)
        entry_at(roots, ((0, 0), (0, 0))).locked = True
        result = cascade_down(roots, ((0, 0),), 0.9, counts)
        assert result.status == "all_locked"
        assert entry_at(roots, ((0, 0), (0, 0))).fraction == 0.3
        assert entry_at(roots, ((0, 0), (0, 1))).fraction == 0.7

    def test_locked_internal_shields_subtree(self):
        roots, counts = two_child_tree(1, 1, f_a=0.2, f_b=0.4)
        entry_at(roots, ((0, 0),)).locked = True
        result = cascade_down(roots, ((0, 0),), 0.9, counts)
        assert result.status == "all_locked"
        assert entry_at(roots, ((0, 0), (0, 0))).fraction == 0.2

    def test_cascade_up_weighted_average(self):
        roots, counts = two_child_tree(3, 1, f_a=1.0, f_b=0.0)
        cascade_up(roots, counts)
        assert entry_at(roots, ((0, 0),)).fraction == pytest.approx(0.75)

    def test_cascade_up_all_equal(self):
        roots, counts = two_child_tree(4, 9, f_a=0.37, f_b=0.37)
        cascade_up(roots, counts)
        assert entry_at(roots, ((0, 0),)).fraction == pytest.approx(0.37)

    def test_empty_subtree_flagged(self):
        roots, counts = two_child_tree(0, 0)
        cascade_up(roots, counts)
        parent = entry_at(roots, ((0, 0),))
        assert parent.empty
        assert parent.fraction == 0.0

    @given(
        f=st.floats(min_value=0.0, max_value=1.0),
        size_a=st.integers(min_value=1, max_value=50),
        size_b=st.integers(min_value=1, max_value=50),
    )
    @settings(max_examples=60, deadline=None)
    def test_down_then_up_is_identity_without_locks(self, f, size_a, size_b):
        roots, counts = two_child_tree(size_a, size_b)
        result = cascade_down(roots, ((0, 0),), f, counts)
        assert result.status == "ok"
        assert entry_at(roots, ((0, 0),)).fraction == pytest.approx(f, abs=1e-12)


class TestHistogram:
    def test_two_bins_split_evenly(self):
        table = make_table({i: {"a": float(v)} for i, v in zip(range(1, 5), [0, 1, 2, 3])})
        preds = linearize([single_node("a", [(-1.0, 10.0)])], table)
        assignment = assign_groups(preds, table)
        hist = group_histogram(table, assignment, 1, "a", bins=2)
        assert hist.counts == (2, 2)
        assert (hist.lo, hist.hi) == (0.0, 3.0)

    def test_empty_group(self):
        table = make_table({1: {"a": 50.0}})
        preds = linearize([single_node("a", [(0.0, 1.0)])], table)
        assignment = assign_groups(preds, table)
        hist = group_histogram(table, assignment, 1, "a", bins=4)
        assert hist.empty
        assert hist.counts == ()

    def test_single_value_group_one_bin(self):
        table = make_table({i: {"a": 2.5} for i in range(1, 6)})
        preds = linearize([single_node("a", [(0.0, 10.0)])], table)
        assignment = assign_groups(preds, table)
        hist = group_histogram(table, assignment, 1, "a", bins=3)
        assert sum(hist.counts) == 5
        assert sorted(hist.counts, reverse=True)[0] == 5

    def test_fuzz_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            values = rng.uniform(-5, 5, size=30)
            table = make_table({i + 1: {"a": float(v)} for i, v in enumerate(values)})
            preds = linearize([single_node("a", [(-math.inf, math.inf)])], table)
            assignment = assign_groups(preds, table)
            bins = int(rng.integers(1, 8))
            hist = group_histogram(table, assignment, 1, "a", bins=bins)
            lo, hi = values.min(), values.max()
            expected = [0] * bins
            for v in values:
                idx = min(int((v - lo) / (hi - lo) * bins), bins - 1) if hi > lo else 0
                expected[idx] += 1
            assert list(hist.counts) == expected
            assert sum(hist.counts) == 30


class TestHierarchyJson:
    def test_round_trip(self):
        rng = np.random.default_rng(4)
        roots = random_hierarchy(rng)
        doc = hierarchy_to_json(roots)
        parsed = hierarchy_from_json(doc)
        assert hierarchy_to_json(parsed) == doc

    def test_single_root_document(self):
        doc = {"attribute": "a", "ranges": [{"lo": 0, "hi": 1}]}
        roots = hierarchy_from_json(doc)
        assert len(roots) == 1
        assert roots[0].ranges[0].ranges.intervals == ((0.0, 1.0),)

    def test_null_bounds_are_infinite(self):
        doc = {"attribute": "a", "ranges": [{"lo": None, "hi": 5}, {"lo": 5, "hi": None}]}
        roots = hierarchy_from_json(doc)
        assert roots[0].ranges[0].ranges.intervals == ((-math.inf, 5.0),)
        assert roots[0].ranges[1].ranges.intervals == ((5.0, math.inf),)

    def test_bad_range_rejected(self):
        with pytest.raises(HierarchyError):
            hierarchy_from_json({"attribute": "a", "ranges": [{"lo": 5, "hi": 5}]})
