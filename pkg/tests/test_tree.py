import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import SIX_LEAF_ORDER, naive_lca_count, random_nested, walk_to_root_lca
from priorclust.metric import verify_ultrametric
from priorclust.tree import (
    PriorTree,
    TreeParseError,
    lca,
    parse_json_tree,
    parse_tree,
    tree_to_ultrametric,
    ultrametric_distance,
    ultrametric_fraction,
)


# -- parsing -----------------------------------------------------------------


def test_six_leaf_shape(six_leaf_tree):
    assert six_leaf_tree.n_leaves == 6
    assert len(six_leaf_tree.children[six_leaf_tree.root]) == 2
    assert six_leaf_tree.subtree_leaf_counts[six_leaf_tree.root] == 6
    assert six_leaf_tree.labels == tuple(SIX_LEAF_ORDER)


def test_single_leaf_collapses():
    t = parse_tree("(a)")
    assert t.n_nodes == 1
    assert t.labels == ("a",)
    assert t.is_leaf[t.root]


def test_duplicate_label():
    with pytest.raises(TreeParseError, match="duplicate"):
        parse_tree("((1,2),(1,3))")


@pytest.mark.parametrize("text", ["", "   ", ";", "()", "(,a)", "(a,)"])
def test_empty_or_hollow(text):
    with pytest.raises(TreeParseError):
        parse_tree(text)


@pytest.mark.parametrize(
    "text, pos",
    [("((1,2),(3,4)", 0), ("(1,2))", 5), ("(1,2);x", 6), ("(1:0.5,2)", 2), ("(1,2)(3)", 5)],
)
def test_syntax_error_positions(text, pos):
    with pytest.raises(TreeParseError) as info:
        parse_tree(text)
    assert info.value.position == pos


def test_unary_chains_collapse():
    t = parse_tree("((((a,b)),c))")
    assert t.n_nodes == 5
    assert all(len(c) >= 2 for v, c in enumerate(t.children) if not t.is_leaf[v])


def test_quoted_labels_and_internal_names():
    t = parse_tree('(("a b","c,\\"d\\""),e)inner;')
    assert t.labels == ("a b", 'c,"d"', "e")
    assert t.names[0] == "inner"
    again = parse_tree(t.to_newick())
    assert again.labels == t.labels


def test_newick_round_trip():
    t = parse_tree("(((1,2),(3,4)),(5,6,7));")
    assert parse_tree(t.to_newick()).to_newick() == t.to_newick()


def test_json_format_matches_newick(six_leaf_tree):
    doc = {
        "name": "root",
        "children": [
            {"children": [{"children": [{"name": "1"}, {"name": "2"}]}, {"children": [{"name": "3"}, {"name": "4"}]}]},
            {"children": [{"name": "5"}, {"name": "6"}]},
        ],
    }
    import json

    t = parse_json_tree(json.dumps(doc))
    assert t.labels == six_leaf_tree.labels
    assert np.array_equal(tree_to_ultrametric(t).values, tree_to_ultrametric(six_leaf_tree).values)


@pytest.mark.parametrize(
    "text", ['{"children": []}', '{"children": [{"children": [1]}]}', "[1, 2]", "{bad json"]
)
def test_json_errors(text):
    with pytest.raises(TreeParseError):
        parse_tree(text, "json")


def test_deep_caterpillar_no_recursion_limit():
    text = "a0"
    for i in range(1, 3000):
        text = f"({text},a{i})"
    t = parse_tree(text)
    assert t.n_leaves == 3000
    assert ultrametric_distance(t, "a0", "a1") == 2 / 3000


# -- structural invariants ------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=64), st.integers(min_value=0, max_value=2**32 - 1))
def test_invariants_random_trees(n, seed):
    t = PriorTree.from_nested(random_nested(np.random.default_rng(seed), n))
    roots = np.flatnonzero(t.parent == -1)
    assert roots.tolist() == [0]
    assert t.n_nodes == sum(len(c) for c in t.children) + 1
    assert all(t.parent[v] < v for v in range(1, t.n_nodes))  # preorder, hence acyclic
    assert t.subtree_leaf_counts[0] == n
    for v in range(t.n_nodes):
        if not t.is_leaf[v]:
            assert len(t.children[v]) >= 2
            assert t.subtree_leaf_counts[v] == sum(t.subtree_leaf_counts[c] for c in t.children[v])


# -- LCA ---------------------------------------------------------------------


def test_six_leaf_lca(six_leaf_tree):
    v = lca(six_leaf_tree, "1", "2")
    assert six_leaf_tree.subtree_leaf_counts[v] == 2
    assert set(six_leaf_tree.leaves_under(v)) == {"1", "2"}
    assert lca(six_leaf_tree, "3", "3") == six_leaf_tree.leaf("3")
    with pytest.raises(KeyError):
        lca(six_leaf_tree, "1", "nope")


@pytest.mark.parametrize("seed", range(25))
def test_lca_matches_walk_to_root(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 65))
    t = PriorTree.from_nested(random_nested(rng, n))
    for a, b in itertools.combinations_with_replacement(t.labels, 2):
        assert t.lca(a, b) == walk_to_root_lca(t.parent, t.leaf(a), t.leaf(b))


# -- the ultrametric ------------------------------------------------------------


def test_six_leaf_distances(six_leaf_tree):
    got = [ultrametric_fraction(six_leaf_tree, "1", b) for b in "23456"]
    assert got == [Fraction(2, 6), Fraction(4, 6), Fraction(4, 6), Fraction(6, 6), Fraction(6, 6)]
    assert ultrametric_distance(six_leaf_tree, "1", "3") == 4 / 6


def test_self_distance_is_one_over_n(six_leaf_tree):
    assert ultrametric_fraction(six_leaf_tree, "4", "4") == Fraction(1, 6)


def test_six_leaf_matrix(six_leaf_ultrametric):
    m = six_leaf_ultrametric
    assert len(m.values) == 15
    sixths = [2, 4, 4, 6, 6, 4, 4, 6, 6, 2, 6, 6, 6, 6, 2]
    assert m.values.tolist() == [k / 6 for k in sixths]
    assert verify_ultrametric(m, tol=0.0)


def test_two_leaf_tree():
    m = tree_to_ultrametric(parse_tree("(a,b)"))
    assert m.values.tolist() == [1.0]


def test_order_mismatch(six_leaf_tree):
    with pytest.raises(ValueError, match="missing"):
        tree_to_ultrametric(six_leaf_tree, ["1", "2", "3"])
    with pytest.raises(ValueError, match="extra"):
        tree_to_ultrametric(six_leaf_tree, SIX_LEAF_ORDER + ["7"])


def test_permuted_order(six_leaf_tree, six_leaf_ultrametric):
    rng = np.random.default_rng(3)
    perm = rng.permutation(6)
    order = [SIX_LEAF_ORDER[i] for i in perm]
    mp = tree_to_ultrametric(six_leaf_tree, order)
    sq, sqp = six_leaf_ultrametric.square(), mp.square()
    assert np.array_equal(sqp, sq[np.ix_(perm, perm)])


@pytest.mark.parametrize("seed", range(30))
def test_random_tree_exact_ratios_and_ultrametricity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 65))
    nested = random_nested(rng, n)
    t = PriorTree.from_nested(nested)
    m = tree_to_ultrametric(t)
    counts = t.pair_counts(t.labels)
    assert counts.min() >= 2 and counts.max() <= n
    assert np.array_equal(m.values, counts / n)
    # exhaustive triple check at zero tolerance
    sq = m.square()
    for j in range(n):
        assert np.all(sq <= np.maximum(sq[:, j][:, None], sq[j, :][None, :]))
    # independent leaf-set oracle on a sample of pairs
    for a, b in itertools.islice(itertools.combinations(t.labels, 2), 40):
        assert m.get(a, b) == naive_lca_count(nested, a, b) / n


@pytest.mark.parametrize("seed", range(10))
def test_monotone_nesting(seed):
    rng = np.random.default_rng(100 + seed)
    t = PriorTree.from_nested(random_nested(rng, int(rng.integers(3, 40))))

    def ancestors(v):
        out = set()
        while v != -1:
            out.add(v)
            v = int(t.parent[v])
        return out

    for a, b, c in itertools.permutations(t.labels[:12], 3):
        ab, ac = t.lca(a, b), t.lca(a, c)
        if ab != ac and ac in ancestors(ab):
            assert ultrametric_distance(t, a, b) < ultrametric_distance(t, a, c)


# -- partial trees ------------------------------------------------------------------


def test_extended_attaches_missing_under_root(six_leaf_tree):
    t = six_leaf_tree.extended(SIX_LEAF_ORDER + ["7", "8"])
    assert t.n_leaves == 8
    assert ultrametric_distance(t, "7", "1") == 1.0
    assert ultrametric_distance(t, "7", "8") == 1.0
    assert ultrametric_fraction(t, "1", "2") == Fraction(2, 8)
    assert six_leaf_tree.extended(SIX_LEAF_ORDER) is six_leaf_tree


def test_extended_single_leaf():
    t = parse_tree("a").extended(["a", "b"])
    assert t.n_leaves == 2 and ultrametric_distance(t, "a", "b") == 1.0


def test_level_frontier(six_leaf_tree):
    level1 = [six_leaf_tree.leaves_under(v) for v in six_leaf_tree.level_frontier(1)]
    assert level1 == [("1", "2", "3", "4"), ("5", "6")]
