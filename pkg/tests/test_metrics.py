import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srp_diot.errors import ParameterError, PreconditionError
from srp_diot.metrics import (
    MobilityPlan,
    UsageState,
    UtilityParams,
    coverage_estimate,
    estimate_ost_size,
    ontology_coverage,
    overlap,
    stability_propagate,
    summary_utility,
    usage_update,
    utility,
)
from srp_diot.ontology import Onid, tree_from_parents

from oracles import count_in_range, ref_stability, ref_utility, subtree_size

P = UtilityParams()


def perfect_tree(degree, height):
    parents = [None]
    frontier = [0]
    for _ in range(height):
        nxt = []
        for p in frontier:
            for _ in range(degree):
                parents.append(p)
                nxt.append(len(parents) - 1)
        frontier = nxt
    return tree_from_parents(parents)


class TestOstEstimate:
    def test_one_known_child_at_position_five(self):
        rst = Onid.from_pieces([(0, 1)], 8)
        child = Onid.from_pieces([(0, 1), (5, 3)], 8)
        assert estimate_ost_size(rst, [child], 2.5, 0.75) == 6
        # a concrete six-child parent: highest position 5, three-bit codes
        six = tree_from_parents([None] + [0] * 6)
        assert subtree_size(six, 0) == 6
        assert six.onids[6] == child

    def test_full_binary_two_levels(self):
        tree = perfect_tree(2, 2)
        leaves = [tree.onids[i] for i in tree.leaves()]
        assert estimate_ost_size(tree.onids[0], leaves, 2.0, 1.0) == subtree_size(tree, 0) == 6

    def test_minimal_case(self):
        rst = Onid.from_pieces([(0, 1)], 8)
        child = Onid.from_pieces([(0, 1), (0, 1)], 8)
        assert estimate_ost_size(rst, [child], 2.0, 1.0) == 2

    def test_unknown_branch_uses_average_degree(self):
        tree = perfect_tree(2, 2)
        # only one grandchild known: level 1 -> 2 nodes, level 2 -> 2 + 1 * deg
        lsc = [tree.onids[tree.leaves()[0]]]
        assert estimate_ost_size(tree.onids[0], lsc, 3.0, 1.0) == 2 + 2 + 3

    def test_rejects_non_descendant(self):
        tree = perfect_tree(2, 2)
        with pytest.raises(PreconditionError):
            estimate_ost_size(tree.onids[1], [tree.onids[2]], 2.0, 1.0)
        with pytest.raises(PreconditionError):
            estimate_ost_size(tree.onids[1], [], 2.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        degree=st.integers(2, 8),
        height=st.integers(1, 3),
        data=st.data(),
    )
    def test_exact_on_full_occupancy_trees(self, degree, height, data):
        if degree**height > 600:
            height = 2
        tree = perfect_tree(degree, height)
        sparse = degree / (1 << (degree - 1).bit_length())
        # the last child of every internal node must be represented
        must = [i for i in tree.leaves() if all(tree.position(j) == degree - 1 for j in tree.path(i)[1:])]
        extra = data.draw(st.lists(st.sampled_from(tree.leaves()), max_size=10))
        internals_last = [
            i for i in range(1, len(tree)) if tree.position(i) == degree - 1
        ]
        # every internal node's maximal child: take the leaf below each such node
        lsc_idx = set(must) | set(extra)
        for i in internals_last:
            j = i
            while tree.nodes[j].child_indices:
                j = tree.nodes[j].child_indices[-1]
            lsc_idx.add(j)
        lsc = [tree.onids[i] for i in sorted(lsc_idx)]
        est = estimate_ost_size(tree.onids[0], lsc, float(degree), sparse)
        assert est == subtree_size(tree, 0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 5000))
    def test_lower_bound(self, seed):
        import random

        from srp_diot.ontology import generate_ontology

        tree = generate_ontology(seed, 40)
        rng = random.Random(seed)
        rst = rng.choice([n.node_index for n in tree.nodes if not n.is_leaf])
        below = [i for i in range(len(tree)) if rst in tree.path(i) and i != rst]
        lsc = rng.sample(below, rng.randint(1, len(below)))
        est = estimate_ost_size(tree.onids[rst], [tree.onids[i] for i in lsc], tree.avg_degree, tree.avg_sparseness)
        represented = set()
        for i in lsc:
            for j in tree.path(i):
                if rst in tree.path(j) and j != rst:
                    represented.add(j)
        assert est >= len(represented)


class TestCoverage:
    def test_full_coverage(self):
        leaves = [(None, 1.0)] * 3
        assert ontology_coverage(leaves, 3) == 1.0

    def test_partial(self):
        assert ontology_coverage([(None, 1.0)], 4) == 0.25

    def test_nested_summaries(self):
        assert ontology_coverage([(None, 0.5), (None, 0.5)], 4) == 0.25

    def test_capped_at_one(self):
        assert ontology_coverage([(None, 1.0)] * 5, 3) == 1.0

    def test_bad_inputs(self):
        with pytest.raises(PreconditionError):
            ontology_coverage([(None, 1.0)], 0)
        with pytest.raises(PreconditionError):
            ontology_coverage([(None, 1.5)], 2)

    def test_estimate_skips_rst(self):
        tree = perfect_tree(3, 1)
        members = [(tree.onids[0], 0.2), (tree.onids[1], 1.0), (tree.onids[3], 1.0)]
        est = coverage_estimate(tree.onids[0], members, 3.0, 0.75)
        assert est.ost_size_estimate == 3
        assert est.oc == pytest.approx(2 / 3)


def _plan(node, pts, reach=100.0, start=0):
    return MobilityPlan(node, tuple((start + i, x, y) for i, (x, y) in enumerate(pts)), reach)


class TestOverlap:
    def test_stationary(self):
        a = _plan(1, [(0, 0)] * 5)
        b = _plan(2, [(50, 0)] * 5)
        assert overlap(a, b) == 5

    def test_never_in_range(self):
        a = _plan(1, [(0, 0)] * 5)
        b = _plan(2, [(500, 0)] * 5)
        assert overlap(a, b) == 0

    def test_crossing_paths(self):
        ta = [(x, 0.0) for x in range(0, 500, 100)]
        tb = [(400 - x, 30.0) for x in range(0, 500, 100)]
        expect = count_in_range(ta, tb, 80.0)
        assert overlap(_plan(1, ta, 80.0), _plan(2, tb, 120.0)) == expect == 1

    def test_window_mismatch(self):
        with pytest.raises(PreconditionError):
            overlap(_plan(1, [(0, 0)] * 5), _plan(2, [(0, 0)] * 5, start=1))


class TestStability:
    def test_all_full(self):
        assert stability_propagate(5, 5, 5, 5) == 5

    def test_three_node_chain(self):
        # y (upstream) stays put, z (sender) shuttles near y, n walks away from y
        y = [(0, 0)] * 5
        z = [(90, 0), (90, 0), (90, 0), (300, 0), (300, 0)]
        n = [(180, 0)] * 5
        reach = 100.0
        ov_yn = count_in_range(y, n, reach)
        ov_zn = count_in_range(z, n, reach)
        ov_yz = count_in_range(y, z, reach)
        assert (ov_yn, ov_zn, ov_yz) == (0, 3, 3)
        assert stability_propagate(ov_yn, ov_zn, ov_yz, 5) == ref_stability(ov_yn, ov_zn, ov_yz) == 3

    def test_receiver_moving_toward_origin(self):
        y = [(0, 0)] * 5
        z = [(90, 0), (90, 0), (400, 0), (400, 0), (400, 0)]
        n = [(300, 0), (200, 0), (80, 0), (50, 0), (20, 0)]
        reach = 100.0
        ov = [count_in_range(y, n, reach), count_in_range(z, n, reach), count_in_range(y, z, reach)]
        assert ov == [3, 0, 2]
        assert stability_propagate(*ov, 5) == 3

    def test_worked_example_values(self):
        assert stability_propagate(0, 3, 5, 5) == 3
        assert stability_propagate(4, 2, 2, 5) == 4

    def test_out_of_range_inputs(self):
        with pytest.raises(ParameterError):
            stability_propagate(6, 0, 0, 5)

    @given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5))
    def test_bounded(self, a, b, c):
        out = stability_propagate(a, b, c, 5)
        assert 0 <= out <= max(a, b, c) <= 5


class TestUsage:
    def test_never_referenced(self):
        s = UsageState()
        for _ in range(10):
            s = usage_update(s, 0.5, 10)
        assert s.ug == 0.0

    def test_saturating_references(self):
        s = UsageState()
        for _ in range(60):
            s = usage_update(UsageState(s.ug, 12), 0.5, 10)
        assert s.ug == pytest.approx(1.0)

    def test_hand_iteration(self):
        s = usage_update(UsageState(0.0, 10), 0.5, 10)
        assert s == UsageState(0.5, 0)
        s = usage_update(s, 0.5, 10)
        assert s.ug == 0.25

    @settings(max_examples=50)
    @given(refs=st.integers(0, 10), alpha=st.floats(0.05, 0.95))
    def test_fixed_point(self, refs, alpha):
        s = UsageState(0.3, 0)
        for _ in range(400):
            s = usage_update(UsageState(s.ug, refs), alpha, 10)
        assert s.ug == pytest.approx(refs / 10, abs=1e-6)


class TestUtility:
    def test_own_device(self):
        assert utility(5, 1.0, 1.0, 0, P) == 32

    def test_zero_stability(self):
        assert utility(0, 1.0, 0.3, 0, P) == 0

    def test_hop_penalty(self):
        assert utility(5, 1.0, 1.0, 4, P) == 28 == ref_utility(5, 1.0, 1.0, 4)

    def test_ablations_pin_factors(self):
        no_stb = UtilityParams(use_stability=False)
        assert utility(0, 1.0, 1.0, 0, no_stb) == 32
        no_cov = UtilityParams(use_coverage=False)
        assert utility(5, 1.0, 0.0, 4, no_cov) == 28

    def test_params_validation(self):
        with pytest.raises(ParameterError):
            UtilityParams(utthr=32)
        with pytest.raises(ParameterError):
            UtilityParams(alpha=1.0)

    @settings(max_examples=200)
    @given(
        stb=st.integers(0, 5),
        ug=st.floats(0, 1),
        oc=st.floats(0, 1),
        hop=st.integers(0, 40),
    )
    def test_monotone_and_bounded(self, stb, ug, oc, hop):
        u = utility(stb, ug, oc, hop, P)
        assert 0 <= u <= 32
        if stb < 5:
            assert utility(stb + 1, ug, oc, hop, P) >= u
        assert utility(stb, min(1.0, ug + 0.1), oc, hop, P) >= u
        assert utility(stb, ug, oc, hop + 1, P) <= u

    def test_summary_utility(self):
        assert summary_utility([26]) == 26
        assert summary_utility([10, 26, 18]) == 26
        with pytest.raises(PreconditionError):
            summary_utility([])
