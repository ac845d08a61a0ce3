"""Acceptance criteria 1-10.

Each test is wrapped by :func:`criterion`, which times it and records a
PASS/FAIL line; ``conftest.py`` prints the lines in the terminal summary.
Independent oracles live in ``oracles.py``.
"""
import functools
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from oracles import (
    SIX_LEAF_NEWICK,
    SIX_LEAF_ORDER,
    minimax_paths,
    naive_agglomeration,
    purity_by_hand,
    random_dissimilarity,
    random_nested,
    random_pipeline_inputs,
)
from priorclust import formats
from priorclust.cli import main
from priorclust.datasets import substitution_fixture, write_fixture
from priorclust.evaluation import (
    KeywordRecord,
    MetricReport,
    entropy,
    normalize_report,
    purity,
    weighted_entropy,
)
from priorclust.linkage import (
    LINKAGES,
    FlatPartition,
    UnattainableK,
    attainable_ks,
    cophenetic,
    cut,
    linkage,
    single_linkage,
)
from priorclust.metric import DistanceMatrix, linf_distance, verify_ultrametric
from priorclust.tree import PriorTree, parse_tree, tree_to_ultrametric, ultrametric_fraction
from priorclust.tuner import GridSpec, PipelineConfig, choose_alpha, grid_search, prior_ultrametric, run_pipeline

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def criterion(number: int, title: str, limit: float | None = None):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            detail = ""
            try:
                detail = fn(*args, **kwargs) or ""
                elapsed = time.perf_counter() - start
                if limit is not None:
                    assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"
            except BaseException as exc:
                elapsed = time.perf_counter() - start
                RESULTS[number] = f"criterion {number:2d} FAIL  {title} ({elapsed:.2f}s): {exc}".splitlines()[0]
                raise
            RESULTS[number] = f"criterion {number:2d} PASS  {title} ({elapsed:.2f}s) {detail}".rstrip()
            print(RESULTS[number])

        return run

    return wrap


def labels(n):
    return [f"p{i}" for i in range(n)]


# -- 1 -------------------------------------------------------------------------


@criterion(1, "six-leaf tree golden distances", limit=1.0)
def test_criterion_1_six_leaf_golden_values(tmp_path):
    tree_file = tmp_path / "six_leaf.nwk"
    tree_file.write_text(SIX_LEAF_NEWICK + "\n")
    out = tmp_path / "u.csv"
    assert main(["encode-tree", str(tree_file), "--out", str(out)]) == 0
    m = formats.read_matrix(out)
    tree = parse_tree(SIX_LEAF_NEWICK)
    want = {"2": Fraction(2, 6), "3": Fraction(4, 6), "4": Fraction(4, 6), "5": Fraction(6, 6), "6": Fraction(6, 6)}
    for b, frac in want.items():
        assert ultrametric_fraction(tree, "1", b) == frac
        # the stored float is the correctly rounded ratio, and reading it back recovers it
        assert m.get("1", b) == frac.numerator / frac.denominator
        assert Fraction(m.get("1", b)).limit_denominator(6) == frac
    return "(1,2..6) = 2/6 4/6 4/6 6/6 6/6"


# -- 2 -------------------------------------------------------------------------


@criterion(2, "six-leaf dendrogram from all three linkages")
def test_criterion_2_six_leaf_dendrogram():
    u = tree_to_ultrametric(parse_tree(SIX_LEAF_NEWICK), SIX_LEAF_ORDER)
    dends = {m: linkage(u, m) for m in LINKAGES}
    ref = dends["single"]
    for d in dends.values():
        assert d.same_as(ref)
        assert np.array_equal(cophenetic(d).values, u.values)
    members = ref.members()
    got = sorted((tuple(ref.labels[i] for i in sorted(members[ref.n + s])), ref.heights[s]) for s in range(5))
    assert got == [
        (("1", "2"), 2 / 6),
        (("1", "2", "3", "4"), 4 / 6),
        (("1", "2", "3", "4", "5", "6"), 1.0),
        (("3", "4"), 2 / 6),
        (("5", "6"), 2 / 6),
    ]
    return "{1,2} {3,4} {5,6} @2/6, {1..4} @4/6, root @1"


# -- 3 -------------------------------------------------------------------------


COUNTER = np.array(
    [
        [0.0, 1.0, 2.0, 3.0],
        [1.0, 0.0, 1.0, 2.5],
        [2.0, 1.0, 0.0, 1.5],
        [3.0, 2.5, 1.5, 0.0],
    ]
)


@criterion(3, "linkage agreement on tree ultrametrics under permutation", limit=60.0)
def test_criterion_3_permutation_invariance():
    rng = np.random.default_rng(2024)
    n_trees, n_perms = 200, 20
    for _ in range(n_trees):
        n = int(rng.integers(2, 65))
        t = PriorTree.from_nested(random_nested(rng, n))
        u = tree_to_ultrametric(t)
        base = list(u.labels)
        for _ in range(n_perms):
            order = [base[i] for i in rng.permutation(n)]
            up = u.reorder(order)
            for m in LINKAGES:
                c = cophenetic(linkage(up, m)).reorder(base)
                assert np.max(np.abs(c.values - u.values), initial=0.0) <= 1e-12, (n, m)

    # the hypothesis matters: a tied non-ultrametric metric breaks complete linkage
    m4 = DistanceMatrix.from_square(list("abcd"), COUNTER)
    assert not verify_ultrametric(m4)
    outcomes = set()
    for perm in itertools.permutations("abcd"):
        c = cophenetic(linkage(m4.reorder(list(perm)), "complete")).reorder(list("abcd"))
        outcomes.add(tuple(c.values))
    assert len(outcomes) > 1
    return f"{n_trees} trees x {n_perms} perms x 3 linkages; counterexample gives {len(outcomes)} outcomes"


# -- 4 -------------------------------------------------------------------------


@criterion(4, "single linkage = maximal sub-dominant ultrametric", limit=30.0)
def test_criterion_4_subdominant():
    rng = np.random.default_rng(4)
    count = 500
    for i in range(count):
        n = int(rng.integers(2, 11))
        sq = random_dissimilarity(rng, n)
        if i % 3 == 0:
            sq = np.round(sq, 1)  # exercise ties
        d = DistanceMatrix.from_square(labels(n), sq)
        c = cophenetic(single_linkage(d)).square()
        assert np.max(np.abs(c - minimax_paths(sq))) <= 1e-12
        assert np.all(c <= sq)
    return f"{count} matrices"


# -- 5 -------------------------------------------------------------------------


@criterion(5, "L-infinity stability of single linkage", limit=30.0)
def test_criterion_5_stability():
    rng = np.random.default_rng(5)
    count = 0
    worst = 0.0
    for eps in (1e-3, 1e-1):
        for _ in range(250):
            n = int(rng.integers(2, 21))
            d = DistanceMatrix.from_square(labels(n), random_dissimilarity(rng, n))
            noisy = np.maximum(d.values + rng.uniform(-eps, eps, d.values.shape), 0.0)
            d2 = d.with_values(noisy, normalized=False)
            gap = linf_distance(d, d2)
            assert gap <= eps
            moved = linf_distance(cophenetic(single_linkage(d)), cophenetic(single_linkage(d2)))
            assert moved <= gap + 1e-12
            worst = max(worst, moved - gap)
            count += 1
    return f"{count} pairs, worst excess {worst:.2e}"


# -- 6 -------------------------------------------------------------------------


@pytest.mark.filterwarnings("ignore:no tree level")
@criterion(6, "blend endpoints through the pipeline")
def test_criterion_6_endpoints():
    rng = np.random.default_rng(6)
    count = 50
    for i in range(count):
        n = int(rng.integers(3, 40))
        tree, d_p, records = random_pipeline_inputs(rng, n)
        # one purchase per label keeps every segment covered when k > 1
        records += [KeywordRecord(f"cover{j}", ((lab, 1),)) for j, lab in enumerate(d_p.labels)]
        ks = (1, 2, 3)
        zero, _ = run_pipeline(PipelineConfig(d_p, tree, records, GridSpec((0.0,), ks)))
        assert zero.same_as(single_linkage(d_p))
        k = 1 + i % 2
        one, _ = run_pipeline(PipelineConfig(d_p, tree, records, GridSpec((1.0,), ks), k=k))
        assert np.array_equal(cophenetic(one).values, tree_to_ultrametric(tree, d_p.labels).values)
    return f"{count} fixtures"


# -- 7 -------------------------------------------------------------------------


@criterion(7, "purity / entropy definitions and normalization convention")
def test_criterion_7_metrics():
    p = FlatPartition.from_mapping({"a": 0, "b": 0, "c": 1, "d": 1})
    split31 = [KeywordRecord("k", (("a", 3), ("c", 1)))]
    even = [KeywordRecord("k", (("a", 2), ("c", 2)))]
    assert purity(p, split31) == 0.75
    assert abs(entropy(p, even) - math.log(2)) <= 1e-12
    assert abs(entropy(p, split31) - -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))) <= 1e-12
    weighted = [KeywordRecord("pure", (("a", 18),)), KeywordRecord("split", (("a", 1), ("c", 1)))]
    assert abs(weighted_entropy(p, weighted) - math.log(2) / 10) <= 1e-12
    one = FlatPartition.from_mapping({x: 0 for x in "abcd"})
    assert purity(one, split31) == 1.0 and entropy(one, split31) == 0.0
    # Fraction-based oracle on random data
    rng = np.random.default_rng(7)
    items = list("abcd")
    for _ in range(20):
        recs = [
            KeywordRecord(f"k{j}", tuple((str(x), int(rng.integers(1, 6))) for x in rng.choice(items, 3, replace=False)))
            for j in range(5)
        ]
        assert abs(purity(p, recs) - purity_by_hand(p.as_dict(), recs)) <= 1e-12

    raw = [MetricReport(0.744, 2.5, 2.5, 1), MetricReport(0.8, 1.7, 1.8, 1), MetricReport(0.768, 1.8, 2.0, 1)]
    norm = normalize_report(raw)
    assert max(r.purity for r in norm) == 1.0 and norm[1].purity == 1.0
    assert max(r.entropy for r in norm) == 1.0 and norm[0].entropy == 1.0
    assert max(r.weighted_entropy for r in norm) == 1.0 and norm[0].weighted_entropy == 1.0
    assert [round(r.purity, 2) for r in norm] == [0.93, 1.0, 0.96]
    return "hand oracles and normalization rows 0.93 / 1.0 / 0.96"


# -- 8 -------------------------------------------------------------------------


FIXTURE_GRID = GridSpec(tuple(i / 10 for i in range(11)), (4, 6, 8, 10, 12))


def _oracle_ultrametric(tree: PriorTree, order):
    """Leaf-share distance by walking parent pointers, as exact fractions."""
    leaf_count = np.zeros(tree.n_nodes, dtype=np.int64)
    ancestors = {}
    for lab in tree.labels:
        v, path = tree.leaf(lab), []
        while v != -1:
            path.append(v)
            leaf_count[v] += 1
            v = int(tree.parent[v])
        ancestors[lab] = path
    n = len(order)
    sq = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        up = set(ancestors[order[j]])
        lca = next(v for v in ancestors[order[i]] if v in up)
        sq[i, j] = sq[j, i] = float(Fraction(int(leaf_count[lca]), tree.n_leaves))
    return sq


def _oracle_cell(sq, K, records, names):
    """Naive single linkage, tie-aware cut and Fraction purity; None if K is blocked."""
    n = len(sq)
    merges = naive_agglomeration(sq, "single")
    heights = [m[2] for m in merges]
    if 0 < n - K < n - 1 and heights[n - K - 1] == heights[n - K]:
        return None
    members = {i: [i] for i in range(n)}
    for s, (a, b, _, _) in enumerate(merges[: n - K]):
        members[n + s] = members.pop(a) + members.pop(b)
    assign = {names[i]: c for c, group in enumerate(members.values()) for i in group}
    return purity_by_hand(assign, records)


@criterion(8, "interior blend weight beats both endpoints", limit=120.0)
def test_criterion_8_interior_alpha():
    fx = substitution_fixture(seed=0)
    names = list(fx.labels)
    records = list(fx.records)
    u_t = prior_ultrametric(fx.tree, names)

    # brute-force the whole metric surface along an independent path
    u_sq = _oracle_ultrametric(fx.tree, names)
    assert np.array_equal(u_sq, u_t.square())
    d_sq = fx.d_p.square()
    surface = {}
    for a in FIXTURE_GRID.alphas:
        sq = d_sq if a == 0.0 else u_sq if a == 1.0 else (1.0 - a) * d_sq + a * u_sq
        for K in FIXTURE_GRID.ks:
            surface[(a, K)] = _oracle_cell(sq, K, records, names)

    frag = grid_search(names, fx.d_p, u_t, FIXTURE_GRID, records)
    for key, want in surface.items():
        got = frag.cells[key]
        assert (got is None) == (want is None), key
        if want is not None:
            assert abs(got - want) <= 1e-12, key

    alpha, score = choose_alpha(frag, "mean", "purity")
    mean = {a: np.mean([v for (b, _), v in surface.items() if b == a and v is not None]) for a in FIXTURE_GRID.alphas}
    assert alpha not in (0.0, 1.0)
    assert abs(score - mean[alpha]) <= 1e-12
    margin = min(score - mean[0.0], score - mean[1.0])
    assert margin >= 0.02

    # the full pipeline lands on the same weight
    _, report = run_pipeline(PipelineConfig(fx.d_p, fx.tree, records, FIXTURE_GRID))
    assert report.chosen[0][0] == alpha
    return f"alpha={alpha} purity {score:.3f} vs {mean[0.0]:.3f} (0) and {mean[1.0]:.3f} (1), margin {margin:.3f}"


# -- 9 -------------------------------------------------------------------------


@criterion(9, "unattainable K on the six-leaf dendrogram")
def test_criterion_9_unattainable(tmp_path, capsys):
    dend = single_linkage(tree_to_ultrametric(parse_tree(SIX_LEAF_NEWICK), SIX_LEAF_ORDER))
    ks = attainable_ks(dend)
    missing = sorted(set(range(1, 7)) - set(ks))
    assert missing
    for K in missing:
        with pytest.raises(UnattainableK) as info:
            cut(dend, K)
        assert info.value.below == max(k for k in ks if k < K)
        assert info.value.above == min(k for k in ks if k > K)
    path = tmp_path / "six_leaf_dendrogram.csv"
    formats.write_dendrogram(path, dend)
    assert main(["cut", str(path), str(missing[0]), "--out", str(tmp_path / "p.csv")]) == 3
    assert str(ks) in capsys.readouterr().err
    return f"attainable {ks}, blocked {missing}"


# -- 10 ------------------------------------------------------------------------


@criterion(10, "tune reruns are byte identical")
def test_criterion_10_determinism(tmp_path):
    fx = substitution_fixture(seed=0)
    snapshots = []
    for run_name in ("first", "second"):
        cfg = write_fixture(fx, tmp_path / run_name, k=4, seed=3)
        cfg.write_text(cfg.read_text() + "\n[run]\nworkers = 4\n")
        assert main(["tune", str(cfg), "--seed", "3"]) == 0
        out = tmp_path / run_name / "out"
        snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert snapshots[0] == snapshots[1]
    assert {"grid.csv", "final.csv"} <= set(snapshots[0])
    return f"{len(snapshots[0])} files compared"
