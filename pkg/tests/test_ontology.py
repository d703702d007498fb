import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srp_diot.errors import (
    MalformedOnidError,
    OntologyFileError,
    ParameterError,
    WidthOverflowError,
)
from srp_diot.ontology import (
    Onid,
    common_ancestor,
    depth,
    encode,
    format_ontology,
    generate_ontology,
    is_ancestor,
    level_pieces,
    parse_ontology,
    parent_onid,
    read_ontology_file,
    sibling_id,
    write_ontology_file,
)

from conftest import brute_ancestors, brute_lca, label_index


def test_112_leaves_gives_a_32_bit_code():
    tree = generate_ontology(0, 112)
    assert len(tree.leaves()) == 112
    assert abs(len(tree) - 186) <= 0.15 * 186
    # ID plus SP vector together
    assert 2 * tree.onid_width_bits == 32


@pytest.mark.parametrize("leaves", [2, 7, 268, 547])
def test_generate_hits_leaf_target(leaves):
    tree = generate_ontology(3, leaves)
    assert len(tree.leaves()) == leaves
    assert all(len(n.child_indices) != 1 for n in tree.nodes)


def test_generate_single_leaf_is_bare_root():
    tree = generate_ontology(1, 1)
    assert len(tree) == 1
    assert tree.root.is_leaf
    assert encode(tree, 0).bit_strings() == ("0", "1")


def test_generate_is_deterministic():
    a = format_ontology(generate_ontology(42, 300))
    b = format_ontology(generate_ontology(42, 300))
    assert a == b


@pytest.mark.parametrize(
    "kwargs",
    [
        {"degree_range": (1, 4), "degree_weights": [1, 1, 1, 1]},
        {"degree_range": (2, 9), "degree_weights": [1] * 8},
        {"degree_range": (2, 4), "degree_weights": []},
        {"degree_range": (2, 4), "degree_weights": [1, 1]},
    ],
)
def test_generate_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        generate_ontology(0, 10, **kwargs)


def test_statistics(fig2_tree):
    # internal nodes: root (5 children) and node 2 (3 children)
    assert fig2_tree.avg_degree == pytest.approx(4.0)
    assert fig2_tree.avg_sparseness == pytest.approx((5 / 8 + 3 / 4) / 2)
    assert fig2_tree.onid_width_bits == 8


def test_root_code(fig2_tree):
    root = encode(fig2_tree, 0)
    assert root.id_bits == 0
    assert root.sp_bits == 0b1000_0000
    assert level_pieces(root) == [(0, 1)]
    assert parent_onid(root) is None
    assert depth(root) == 0


def test_fig2_sibling_codes(fig2_tree):
    codes = [encode(fig2_tree, i).bit_strings()[0] for i in range(1, 6)]
    assert codes == ["0000", "0001", "0010", "0011", "0100"]
    fourth = encode(fig2_tree, 4)
    assert fourth.bit_strings() == ("0011", "1100")
    assert level_pieces(fourth) == [(0, 1), (3, 3)]
    assert sibling_id(fourth) == (3, 3)
    grandkids = [encode(fig2_tree, i).bit_strings() for i in (6, 7, 8)]
    assert grandkids == [
        ("000100", "110010"),
        ("000101", "110010"),
        ("000110", "110010"),
    ]


def test_fig1_parent_and_common_ancestor(fig1_tree):
    t9, t11, t12 = (encode(fig1_tree, label_index(fig1_tree, x)) for x in ("T9", "T11", "T12"))
    assert parent_onid(t11) == t9
    assert common_ancestor(t11, t12) == (t9, 1, 1)
    assert common_ancestor(t11, t11) == (t11, 0, 0)
    assert is_ancestor(t9, t12) and not is_ancestor(t12, t9)


def test_pieces_round_trip(fig1_tree):
    for onid in fig1_tree.onids:
        assert Onid.from_pieces(level_pieces(onid), onid.width) == onid


def test_malformed_codes_rejected():
    with pytest.raises(MalformedOnidError):
        Onid(0, 0, 8, 1)  # no SP bits
    with pytest.raises(MalformedOnidError):
        Onid(0, 0b1000_0001, 8, 1)  # stray padding bit in SP
    with pytest.raises(MalformedOnidError):
        Onid(0b0000_0001, 0b1000_0000, 8, 1)  # stray padding bit in ID
    with pytest.raises(MalformedOnidError):
        Onid(0b1000_0000, 0b1000_0000, 8, 1)  # root piece must be 0
    with pytest.raises(WidthOverflowError):
        Onid.from_pieces([(0, 1), (3, 4), (5, 4)], 8)


def test_padding_neutrality(fig2_tree):
    code = encode(fig2_tree, 4)
    with pytest.raises(MalformedOnidError):
        Onid(code.id_bits | 1, code.sp_bits, code.width, code.length)


def _check_tree_against_oracle(tree, pair_seed=0, pairs=200):
    codes = tree.onids
    assert len(set(codes)) == len(codes)
    for i, node in enumerate(tree.nodes):
        code = codes[i]
        chain = brute_ancestors(tree, i)
        assert depth(code) == len(chain) - 1
        if node.parent_index is None:
            assert parent_onid(code) is None
        else:
            assert parent_onid(code) == codes[node.parent_index]
            # piece width is fixed by the parent's fan-out
            fan = len(tree.nodes[node.parent_index].child_indices)
            assert sibling_id(code) == (tree.position(i), (fan - 1).bit_length())
        # decomposition reproduces the explicit root-to-node position path
        path = [tree.position(j) for j in tree.path(i)]
        assert [v for v, _ in level_pieces(code)] == path
    rng = random.Random(pair_seed)
    for _ in range(pairs):
        a, b = rng.randrange(len(tree)), rng.randrange(len(tree))
        anc, da, db = brute_lca(tree, a, b)
        assert common_ancestor(codes[a], codes[b]) == (codes[anc], da, db)
        assert common_ancestor(codes[b], codes[a]) == (codes[anc], db, da)
        assert is_ancestor(codes[a], codes[b]) == (a in brute_ancestors(tree, b))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), leaves=st.integers(1, 400))
def test_codes_match_explicit_tree(seed, leaves):
    _check_tree_against_oracle(generate_ontology(seed, leaves), pair_seed=seed)


def test_is_ancestor_root_of_everything(fig1_tree):
    root = fig1_tree.onids[0]
    assert all(is_ancestor(root, c) for c in fig1_tree.onids)


def test_file_round_trip(tmp_path):
    tree = generate_ontology(9, 120)
    p1, p2 = tmp_path / "a.ont", tmp_path / "b.ont"
    write_ontology_file(tree, p1)
    back = read_ontology_file(p1)
    write_ontology_file(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.onid_width_bits == tree.onid_width_bits
    assert back.avg_degree == tree.avg_degree
    assert back.avg_sparseness == tree.avg_sparseness
    assert back.onids == tree.onids


def test_parse_hand_written_file():
    text = "8 2.0 1.0\n0 - 0 root\n1 0 0 left\n2 0 1 right wing\n3 2 0 a\n4 2 1 b\n"
    tree = parse_ontology(text)
    assert [n.child_indices for n in tree.nodes] == [(1, 2), (), (3, 4), (), ()]
    assert tree.nodes[2].label == "right wing"
    assert tree.leaves() == [1, 3, 4]
    assert encode(tree, 4).bit_strings() == ("011", "111")


def test_parse_empty_file_fails():
    with pytest.raises(OntologyFileError, match="line 1"):
        parse_ontology("")


def test_parse_error_names_line():
    text = "8 2.0 1.0\n0 - 0 root\n1 0 x left\n"
    with pytest.raises(OntologyFileError, match="line 3"):
        parse_ontology(text)
