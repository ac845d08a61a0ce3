"""Blend-weight tuning and the end-to-end clustering pipeline.

The pipeline splits the labels into coarse segments, grid-searches the
blend weight ``alpha`` and the cluster count ``K`` inside each segment with
single linkage, picks one ``alpha`` per segment by aggregating the metric
over ``K``, rebuilds each segment at its chosen weight and joins the
segment dendrograms by single linkage on the prior distance.
"""
from __future__ import annotations

import configparser
import statistics
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import HIGHER_IS_BETTER, METRICS, KeywordRecord, evaluate, restrict_records
from .linkage import Dendrogram, UnattainableK, cut, single_linkage
from .metric import DistanceMatrix, blend
from .tree import PriorTree, tree_to_ultrametric

__all__ = [
    "AGGREGATIONS",
    "STRATEGIES",
    "UNATTAINABLE",
    "GridSpec",
    "GridFragment",
    "GridSearchReport",
    "PipelineConfig",
    "k_medoids",
    "pre_partition",
    "grid_search",
    "choose_alpha",
    "combine_dendrograms",
    "prior_ultrametric",
    "run_pipeline",
    "load_config",
    "run_config_file",
]

AGGREGATIONS = ("mean", "median", "best")
STRATEGIES = ("tree-cut", "medoids")
UNATTAINABLE = "UNATTAINABLE"


@dataclass(frozen=True)
class GridSpec:
    """Search grid over blend weights and cluster counts."""

    alphas: tuple[float, ...]
    ks: tuple[int, ...]
    metric: str = "purity"
    aggregation: str = "mean"

    def __post_init__(self):
        alphas = tuple(sorted({float(a) for a in self.alphas}))
        ks = tuple(sorted({int(k) for k in self.ks}))
        if not alphas or not ks:
            raise ValueError("alpha and K grids must be non-empty")
        if alphas[0] < 0 or alphas[-1] > 1:
            raise ValueError("alphas must lie in [0, 1]")
        if ks[0] < 1:
            raise ValueError("K values must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "ks", ks)


@dataclass
class GridFragment:
    """Metric value per ``(alpha, K)`` for one segment; None marks unattainable K."""

    segment: tuple[str, ...]
    cells: dict[tuple[float, int], float | None]


@dataclass
class GridSearchReport:
    metric: str
    aggregation: str
    segments: list[tuple[str, ...]]
    cells: dict[tuple[int, float, int], float | None]
    chosen: list[tuple[float, float]] = field(default_factory=list)

    def rows(self):
        for (s, a, k) in sorted(self.cells):
            v = self.cells[(s, a, k)]
            yield s, a, k, self.metric, (UNATTAINABLE if v is None else v)

    def to_csv(self) -> str:
        lines = ["segment,alpha,K,metric,value"]
        for s, a, k, m, v in self.rows():
            lines.append(f"{s},{a!r},{k},{m},{v if isinstance(v, str) else repr(float(v))}")
        return "\n".join(lines) + "\n"

    def chosen_csv(self) -> str:
        lines = ["segment,size,alpha,aggregation,score"]
        for s, (a, score) in enumerate(self.chosen):
            lines.append(f"{s},{len(self.segments[s])},{a!r},{self.aggregation},{float(score)!r}")
        return "\n".join(lines) + "\n"


# -- pre-partition --------------------------------------------------------------------


def _pam_cost(D: np.ndarray, medoids) -> float:
    return float(D[:, list(medoids)].min(axis=1).sum())


def k_medoids(D: np.ndarray, k: int, seed: int = 0, n_init: int = 8, max_iter: int = 200):
    """Partitioning around medoids on a square distance array.

    Runs the greedy BUILD start plus ``n_init - 1`` random starts, each
    improved by best-improvement swaps, and keeps the cheapest. Returns
    ``(sorted medoid indices, assignment to medoid position)``.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    rng = np.random.default_rng(seed)

    first = int(np.argmin(D.sum(axis=1)))
    build = [first]
    nearest = D[:, first].copy()
    while len(build) < k:
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[build] = -1.0
        c = int(np.argmax(gain))
        build.append(c)
        nearest = np.minimum(nearest, D[:, c])
    starts = [build] + [rng.choice(n, size=k, replace=False).tolist() for _ in range(n_init - 1)]

    best, best_cost = None, np.inf
    for med in starts:
        med = list(med)
        cost = _pam_cost(D, med)
        for _ in range(max_iter):
            move, move_cost = None, cost
            for pos in range(k):
                others = med[:pos] + med[pos + 1 :]
                base = D[:, others].min(axis=1) if others else np.full(n, np.inf)
                cand = np.minimum(base[:, None], D).sum(axis=0)
                cand[med] = np.inf
                o = int(np.argmin(cand))
                if cand[o] < move_cost - 1e-12 * max(1.0, abs(move_cost)):
                    move, move_cost = (pos, o), float(cand[o])
            if move is None:
                break
            med[move[0]] = move[1]
            cost = move_cost
        if cost < best_cost:
            best, best_cost = sorted(med), cost
    assignment = np.argmin(D[:, best], axis=1)
    return best, assignment


def pre_partition(
    labels: Sequence[str],
    d_p: DistanceMatrix | None,
    tree: PriorTree | None,
    k: int,
    strategy: str = "tree-cut",
    seed: int = 0,
) -> list[tuple[str, ...]]:
    """Split ``labels`` into about ``k`` disjoint segments.

    ``"tree-cut"`` takes the shallowest depth level of ``tree`` whose
    frontier covers at least ``k`` non-empty segments (warning when it
    overshoots). ``"medoids"`` runs k-medoids on ``d_p``. Segments keep the
    order of ``labels`` internally.
    """
    labels = tuple(labels)
    n = len(labels)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    if k == 1:
        return [labels]
    pos = {lab: i for i, lab in enumerate(labels)}
    if strategy == "tree-cut":
        if tree is None:
            raise ValueError("tree-cut pre-partition needs a prior tree")
        tree = tree.extended(labels)
        segments: list[tuple[str, ...]] = []
        for level in range(int(tree.depth.max()) + 1):
            segments = []
            for node in tree.level_frontier(level):
                seg = sorted((lab for lab in tree.leaves_under(node) if lab in pos), key=pos.__getitem__)
                if seg:
                    segments.append(tuple(seg))
            if len(segments) >= k:
                break
        if len(segments) != k:
            warnings.warn(
                f"no tree level yields exactly {k} segments; using {len(segments)}",
                RuntimeWarning,
                stacklevel=2,
            )
        return segments
    if strategy == "medoids":
        if d_p is None:
            raise ValueError("medoids pre-partition needs a distance matrix")
        sq = d_p.subset(labels).square()
        _, assignment = k_medoids(sq, k, seed=seed)
        groups: dict[int, list[str]] = {}
        for lab, c in zip(labels, assignment.tolist()):
            groups.setdefault(c, []).append(lab)
        return [tuple(g) for g in sorted(groups.values(), key=lambda g: pos[g[0]])]
    raise ValueError(f"unknown pre-partition strategy {strategy!r}; choose from {STRATEGIES}")


# -- grid search ------------------------------------------------------------------------


def grid_search(
    segment: Sequence[str],
    d_p: DistanceMatrix,
    u_t: DistanceMatrix,
    grid: GridSpec,
    records: Sequence[KeywordRecord],
) -> GridFragment:
    """Evaluate ``grid.metric`` for every ``(alpha, K)`` cell on one segment.

    Purchases outside the segment are ignored. K values above the segment
    size, or blocked by tied merge heights, are stored as None.
    """
    segment = tuple(segment)
    d = d_p.subset(segment)
    u = u_t.subset(segment)
    recs = restrict_records(records, segment)
    if not recs:
        raise ValueError(f"no keyword purchases fall inside segment starting {segment[:3]}")
    cells: dict[tuple[float, int], float | None] = {}
    for alpha in grid.alphas:
        dend = single_linkage(blend(d, u, alpha))
        for K in grid.ks:
            if K > len(segment):
                cells[(alpha, K)] = None
                continue
            try:
                part = cut(dend, K)
            except UnattainableK:
                cells[(alpha, K)] = None
                continue
            cells[(alpha, K)] = evaluate(part, recs)[grid.metric]
    return GridFragment(segment, cells)


def _aggregate(values: list[float], how: str, higher_better: bool) -> float:
    if how == "mean":
        return statistics.fmean(values)
    if how == "median":
        return statistics.median(values)
    if how == "best":
        return max(values) if higher_better else min(values)
    raise ValueError(f"unknown aggregation {how!r}")


def choose_alpha(fragment: GridFragment, aggregation: str = "mean", metric: str = "purity") -> tuple[float, float]:
    """Best blend weight after aggregating the metric over attainable K.

    Purity is maximized and entropies minimized; on a tie the smaller
    ``alpha`` wins.
    """
    higher = HIGHER_IS_BETTER[metric]
    by_alpha: dict[float, list[float]] = {}
    for (alpha, _), v in sorted(fragment.cells.items()):
        if v is not None:
            by_alpha.setdefault(alpha, []).append(v)
    if not by_alpha:
        raise ValueError("every grid cell is unattainable; widen the K grid")
    best = None
    for alpha in sorted(by_alpha):
        score = _aggregate(by_alpha[alpha], aggregation, higher)
        if best is None or (score > best[1] if higher else score < best[1]):
            best = (alpha, score)
    return best


# -- recombination ---------------------------------------------------------------


def combine_dendrograms(parts: Sequence[tuple[Sequence[str], Dendrogram]], u_t: DistanceMatrix) -> Dendrogram:
    """Join per-segment dendrograms into one over ``u_t.labels``.

    Segments are treated as single nodes and merged by single linkage on the
    prior distance ``u_t``. A joining merge is raised to the top height of
    either side when that is larger, so heights stay monotone.
    """
    parts = [(tuple(seg), dend) for seg, dend in parts]
    if not parts:
        raise ValueError("nothing to combine")
    if len(parts) == 1:
        return parts[0][1]
    labels = u_t.labels
    gidx = {lab: i for i, lab in enumerate(labels)}
    seen: set[str] = set()
    for seg, dend in parts:
        if dend is None:
            raise ValueError("missing dendrogram for a segment")
        if set(dend.labels) != set(seg):
            raise ValueError("dendrogram labels differ from its segment")
        if seen & set(seg):
            raise ValueError(f"segments overlap on {sorted(seen & set(seg))[:5]}")
        seen |= set(seg)
    if seen != set(labels):
        raise ValueError(f"segments do not cover the labels; missing {sorted(set(labels) - seen)[:5]}")

    N = len(labels)
    internal: list[tuple[int, int, float]] = []  # children as refs: <N leaf, >=N internal
    tops, top_h = [], []
    for seg, dend in parts:
        ref = [gidx[lab] for lab in dend.labels]
        for m in dend:
            internal.append((ref[m.left], ref[m.right], m.height))
            ref.append(N + len(internal) - 1)
        tops.append(ref[-1])
        top_h.append(float(dend.heights[-1]) if len(dend) else 0.0)

    sq = u_t.square()
    idx = [np.array([gidx[lab] for lab in seg]) for seg, _ in parts]
    k = len(parts)
    between = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            between[a, b] = between[b, a] = sq[np.ix_(idx[a], idx[b])].min()
    top = single_linkage(DistanceMatrix.from_square([str(i) for i in range(k)], between))
    for m in top:
        h = max(m.height, top_h[m.left], top_h[m.right])
        internal.append((tops[m.left], tops[m.right], h))
        tops.append(N + len(internal) - 1)
        top_h.append(h)

    # children precede parents in creation order and are never higher
    order = sorted(range(len(internal)), key=lambda i: (internal[i][2], i))
    new_id = {N + i: N + pos for pos, i in enumerate(order)}
    size = [1] * N + [0] * len(internal)
    merges = []
    for pos, i in enumerate(order):
        a, b, h = internal[i]
        a, b = new_id.get(a, a), new_id.get(b, b)
        size[N + pos] = size[a] + size[b]
        merges.append((min(a, b), max(a, b), h, size[N + pos]))
    return Dendrogram.from_merges(labels, merges)


# -- pipeline ---------------------------------------------------------------------


@dataclass
class PipelineConfig:
    d_p: DistanceMatrix
    tree: PriorTree
    records: list[KeywordRecord]
    grid: GridSpec
    k: int = 1
    strategy: str = "tree-cut"
    seed: int = 0
    workers: int = 1


def prior_ultrametric(tree: PriorTree, labels: Sequence[str]) -> DistanceMatrix:
    """Prior distance over ``labels``.

    Labels missing from the tree hang off the root; tree leaves absent from
    ``labels`` still count towards subtree sizes.
    """
    full = tree.extended(labels)
    return tree_to_ultrametric(full).subset(labels)


def run_pipeline(config: PipelineConfig) -> tuple[Dendrogram, GridSearchReport]:
    d_p = config.d_p
    if d_p.values.size and d_p.values.max() > 1.0:
        raise ValueError("task distance must be normalized into [0, 1]")
    labels = d_p.labels
    u_t = prior_ultrametric(config.tree, labels)
    segments = pre_partition(labels, d_p, config.tree, config.k, config.strategy, config.seed)
    grid = config.grid

    def work(item):
        s, seg = item
        try:
            frag = grid_search(seg, d_p, u_t, grid, config.records)
            alpha, score = choose_alpha(frag, grid.aggregation, grid.metric)
            dend = single_linkage(blend(d_p.subset(seg), u_t.subset(seg), alpha))
        except ValueError as exc:
            raise ValueError(f"segment {s} ({len(seg)} labels): {exc}") from exc
        return frag, (alpha, score), dend

    items = list(enumerate(segments))
    if config.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]

    cells = {}
    for s, (frag, _, _) in enumerate(results):
        for (alpha, K), v in frag.cells.items():
            cells[(s, alpha, K)] = v
    report = GridSearchReport(
        metric=grid.metric,
        aggregation=grid.aggregation,
        segments=list(segments),
        cells=cells,
        chosen=[r[1] for r in results],
    )
    final = combine_dendrograms([(seg, r[2]) for seg, r in zip(segments, results)], u_t)
    return final, report


# -- config files ----------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def load_config(path) -> tuple[PipelineConfig, dict]:
    """Read an INI pipeline config; relative paths resolve against its folder.

    Sections and keys::

        [inputs]    tree, tree_format?, embeddings | distances,
                    normalize_distances?, records, test_records?
        [grid]      alphas, ks, metric?, aggregation?
        [partition] strategy?, k?, seed?
        [run]       workers?
        [outputs]   report, dendrogram, newick?, chosen?, test_report?
    """
    from . import formats
    from .metric import cosine_dissimilarity_matrix, normalize

    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    base = path.parent

    def p(section, key, required=True):
        if not cp.has_option(section, key):
            if required:
                raise ValueError(f"{path}: missing [{section}] {key}")
            return None
        return base / cp.get(section, key)

    tree = formats.read_tree(p("inputs", "tree"), cp.get("inputs", "tree_format", fallback=None))
    emb, dist = p("inputs", "embeddings", False), p("inputs", "distances", False)
    if (emb is None) == (dist is None):
        raise ValueError(f"{path}: give exactly one of [inputs] embeddings / distances")
    d_p = cosine_dissimilarity_matrix(formats.read_embeddings(emb)) if emb else formats.read_matrix(dist)
    if cp.getboolean("inputs", "normalize_distances", fallback=False):
        d_p = normalize(d_p)
    records = formats.read_records(p("inputs", "records"), d_p.labels)
    grid = GridSpec(
        alphas=tuple(_floats(cp.get("grid", "alphas"))),
        ks=tuple(_ints(cp.get("grid", "ks"))),
        metric=cp.get("grid", "metric", fallback="purity"),
        aggregation=cp.get("grid", "aggregation", fallback="mean"),
    )
    config = PipelineConfig(
        d_p=d_p,
        tree=tree,
        records=records,
        grid=grid,
        k=cp.getint("partition", "k", fallback=1),
        strategy=cp.get("partition", "strategy", fallback="tree-cut"),
        seed=cp.getint("partition", "seed", fallback=0),
        workers=cp.getint("run", "workers", fallback=1),
    )
    report = p("outputs", "report")
    outputs = {
        "report": report,
        "dendrogram": p("outputs", "dendrogram"),
        "newick": p("outputs", "newick", False),
        "chosen": p("outputs", "chosen", False) or report.with_suffix(".chosen.csv"),
        "test_records": p("inputs", "test_records", False),
        "test_report": p("outputs", "test_report", False) or report.with_suffix(".test.csv"),
    }
    return config, outputs


def run_config_file(path, seed: int | None = None) -> tuple[Dendrogram, GridSearchReport, dict]:
    """Run the pipeline described by an INI file and write its outputs."""
    from . import formats

    config, outputs = load_config(path)
    if seed is not None:
        config.seed = seed
    final, report = run_pipeline(config)
    formats.atomic_write_text(outputs["report"], report.to_csv())
    formats.atomic_write_text(outputs["chosen"], report.chosen_csv())
    formats.write_dendrogram(outputs["dendrogram"], final, outputs["newick"])
    if outputs["test_records"] is not None:
        test = formats.read_records(outputs["test_records"], final.labels)
        lines = ["K,purity,entropy,weighted_entropy"]
        for K in config.grid.ks:
            try:
                r = evaluate(cut(final, K), test) if K <= final.n else None
            except UnattainableK:
                r = None
            if r is None:
                lines.append(f"{K},{UNATTAINABLE},{UNATTAINABLE},{UNATTAINABLE}")
            else:
                lines.append(f"{K},{r.purity!r},{r.entropy!r},{r.weighted_entropy!r}")
        formats.atomic_write_text(outputs["test_report"], "\n".join(lines) + "\n")
    return final, report, outputs
