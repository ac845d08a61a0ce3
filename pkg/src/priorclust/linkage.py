"""Agglomerative clustering with single, complete and average linkage.

Cluster ids follow the scipy convention: leaves are ``0 .. n-1`` and the
merge created at step ``s`` gets id ``n + s``. When several cluster pairs
tie at the minimal linkage value, the pair with the lexicographically
smallest ``(min id, max id)`` merges first. On ultrametric input every
linkage produces the same cophenetic matrix whatever the tie order; on other
inputs complete and average linkage can depend on it, which
:func:`permutation_invariance_check` measures.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .metric import DistanceMatrix

__all__ = [
    "LINKAGES",
    "Dendrogram",
    "FlatPartition",
    "Merge",
    "UnattainableK",
    "agglomerate",
    "linkage",
    "single_linkage",
    "complete_linkage",
    "average_linkage",
    "cophenetic",
    "cut",
    "attainable_ks",
    "permutation_invariance_check",
]

LINKAGES = ("single", "complete", "average")


class Merge(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Binary merge sequence over ``labels`` with non-decreasing heights."""

    labels: tuple[str, ...]
    left: np.ndarray
    right: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        n = len(labels)
        if n == 0:
            raise ValueError("dendrogram needs at least one label")
        if len(set(labels)) != n:
            raise ValueError("dendrogram labels must be unique")
        left = np.array(self.left, dtype=np.int64).reshape(-1)
        right = np.array(self.right, dtype=np.int64).reshape(-1)
        heights = np.array(self.heights, dtype=float).reshape(-1)
        sizes = np.array(self.sizes, dtype=np.int64).reshape(-1)
        if not (len(left) == len(right) == len(heights) == len(sizes) == n - 1):
            raise ValueError(f"a dendrogram over {n} labels needs {n - 1} merges")
        if not np.all(np.isfinite(heights)):
            raise ValueError("merge heights must be finite")
        if np.any(np.diff(heights) < 0):
            raise ValueError("merge heights must be non-decreasing")
        size_of = np.ones(2 * n - 1, dtype=np.int64)
        used = np.zeros(2 * n - 1, dtype=bool)
        for s in range(n - 1):
            a, b = left[s], right[s]
            for c in (a, b):
                if not 0 <= c < n + s:
                    raise ValueError(f"merge {s} references cluster {c} before it exists")
                if used[c]:
                    raise ValueError(f"cluster {c} is merged twice")
                used[c] = True
            if a == b:
                raise ValueError(f"merge {s} joins cluster {a} with itself")
            size_of[n + s] = size_of[a] + size_of[b]
            if sizes[s] != size_of[n + s]:
                raise ValueError(f"merge {s} has size {sizes[s]}, expected {size_of[n + s]}")
        for arr in (left, right, heights, sizes):
            arr.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "heights", heights)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_merges(cls, labels: Sequence[str], merges: Sequence[Sequence]) -> "Dendrogram":
        merges = list(merges)
        cols = list(zip(*merges)) if merges else [(), (), (), ()]
        return cls(tuple(labels), *cols)

    @property
    def n(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.heights)

    def __iter__(self) -> Iterator[Merge]:
        for s in range(len(self.heights)):
            yield Merge(int(self.left[s]), int(self.right[s]), float(self.heights[s]), int(self.sizes[s]))

    def __repr__(self) -> str:
        return f"Dendrogram(n={self.n})"

    def members(self) -> list[list[int]]:
        """Leaf indices under every cluster id ``0 .. 2n-2``."""
        n = self.n
        out: list[list[int]] = [[i] for i in range(n)]
        for s in range(n - 1):
            out.append(out[self.left[s]] + out[self.right[s]])
        return out

    def to_linkage_matrix(self) -> np.ndarray:
        """scipy-style ``(n-1, 4)`` linkage matrix."""
        return np.column_stack([self.left, self.right, self.heights, self.sizes]).astype(float)

    def same_as(self, other: "Dendrogram") -> bool:
        return (
            self.labels == other.labels
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.heights, other.heights)
        )

    def to_newick(self) -> str:
        """Nested-parenthesis text with each merge height as the node annotation."""
        from .tree import _quote

        n = self.n
        if n == 1:
            return _quote(self.labels[0]) + ";"
        parts: list[str] = []
        stack: list = [(2 * n - 2, 0)]
        while stack:
            c, k = stack.pop()
            if c < n:
                parts.append(_quote(self.labels[c]))
                continue
            s = c - n
            if k == 0:
                parts.append("(")
                stack.append((c, 1))
                stack.append((int(self.left[s]), 0))
            elif k == 1:
                parts.append(",")
                stack.append((c, 2))
                stack.append((int(self.right[s]), 0))
            else:
                parts.append(")" + repr(float(self.heights[s])))
        return "".join(parts) + ";"


@dataclass(frozen=True, eq=False)
class FlatPartition:
    """Assignment of every label to one of ``K`` non-empty clusters."""

    labels: tuple[str, ...]
    assignment: np.ndarray

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64).reshape(-1)
        if len(a) != len(self.labels):
            raise ValueError("assignment length differs from label count")
        if len(a) and (a.min() != 0 or len(np.unique(a)) != a.max() + 1):
            raise ValueError("cluster indices must be 0..K-1 with no empty cluster")
        a.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "FlatPartition":
        labels = tuple(mapping)
        raw = [mapping[lab] for lab in labels]
        # renumber by first appearance so arbitrary cluster names are accepted
        code: dict = {}
        a = [code.setdefault(c, len(code)) for c in raw]
        return cls(labels, a)

    @property
    def K(self) -> int:
        return int(self.assignment.max()) + 1 if len(self.assignment) else 0

    def as_dict(self) -> dict[str, int]:
        return dict(zip(self.labels, self.assignment.tolist()))

    def clusters(self) -> list[tuple[str, ...]]:
        out: list[list[str]] = [[] for _ in range(self.K)]
        for lab, c in zip(self.labels, self.assignment.tolist()):
            out[c].append(lab)
        return [tuple(c) for c in out]

    def blocks(self) -> frozenset:
        """Clusters as a set of label sets, independent of numbering."""
        return frozenset(frozenset(c) for c in self.clusters())


class UnattainableK(ValueError):
    """No cut gives exactly ``K`` clusters without splitting tied merges."""

    def __init__(self, K: int, below: int | None, above: int | None):
        super().__init__(
            f"K={K} is not attainable because of tied merge heights; "
            f"nearest attainable: below={below}, above={above}"
        )
        self.K = K
        self.below = below
        self.above = above


StepHook = Callable[[np.ndarray, np.ndarray, np.ndarray], None]


def agglomerate(D: DistanceMatrix, method: str = "single", on_step: StepHook | None = None) -> Dendrogram:
    """Generic agglomeration over a dense cluster-distance table.

    Each step merges the closest pair (ties broken by cluster id) and updates
    the merged row. Single and complete linkage use exact min/max updates.
    Average linkage carries cross-pair distance sums and clamps the mean into
    the [min, max] of the cross distances, so clusters whose cross distances
    are all equal get that value exactly.

    ``on_step(ids, sizes, table)`` is called before every merge with the
    active cluster ids, their sizes and the current linkage table between
    them; it exists for instrumentation and must not mutate its arguments.
    """
    if method not in LINKAGES:
        raise ValueError(f"unknown linkage {method!r}; choose from {LINKAGES}")
    n = D.n
    if n == 0:
        raise ValueError("cannot cluster an empty matrix")
    table = D.square()
    np.fill_diagonal(table, np.inf)
    if method == "average":
        sums = D.square()
        lo = table.copy()
        hi = D.square()
        np.fill_diagonal(hi, -np.inf)
    slot_id = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    heights = np.empty(n - 1)
    sizes = np.empty(n - 1, dtype=np.int64)

    for s in range(n - 1):
        if on_step is not None:
            act = np.flatnonzero(active)
            on_step(slot_id[act].copy(), size[act].copy(), table[np.ix_(act, act)].copy())
        h = table.min()
        rows, cols = np.nonzero(table == h)
        keep = rows < cols
        rows, cols = rows[keep], cols[keep]
        a_id, b_id = slot_id[rows], slot_id[cols]
        key_lo = np.minimum(a_id, b_id)
        key_hi = np.maximum(a_id, b_id)
        best = np.lexsort((key_hi, key_lo))[0]
        p, q = int(rows[best]), int(cols[best])
        left[s], right[s] = key_lo[best], key_hi[best]
        heights[s] = h
        sizes[s] = size[p] + size[q]

        if method == "single":
            row = np.minimum(table[p], table[q])
        elif method == "complete":
            row = np.maximum(table[p], table[q])
        else:
            srow = sums[p] + sums[q]
            lrow = np.minimum(lo[p], lo[q])
            hrow = np.maximum(hi[p], hi[q])
            sums[p, :] = srow
            sums[:, p] = srow
            lo[p, :] = lrow
            lo[:, p] = lrow
            hi[p, :] = hrow
            hi[:, p] = hrow
            with np.errstate(invalid="ignore"):
                row = np.clip(srow / (sizes[s] * size), lrow, hrow)
        active[q] = False
        row[~active] = np.inf
        row[p] = np.inf
        table[p, :] = row
        table[:, p] = row
        table[q, :] = np.inf
        table[:, q] = np.inf
        size[p] = sizes[s]
        slot_id[p] = n + s

    return Dendrogram(D.labels, left, right, heights, sizes)


def single_linkage(D: DistanceMatrix) -> Dendrogram:
    """Merge by the closest cross pair; cophenetic = minimax path distance."""
    return agglomerate(D, "single")


def complete_linkage(D: DistanceMatrix) -> Dendrogram:
    return agglomerate(D, "complete")


def average_linkage(D: DistanceMatrix) -> Dendrogram:
    return agglomerate(D, "average")


_BY_NAME = {"single": single_linkage, "complete": complete_linkage, "average": average_linkage}


def linkage(D: DistanceMatrix, method: str) -> Dendrogram:
    try:
        return _BY_NAME[method](D)
    except KeyError:
        raise ValueError(f"unknown linkage {method!r}; choose from {LINKAGES}") from None


def cophenetic(dend: Dendrogram) -> DistanceMatrix:
    """Matrix of the height at which each pair of leaves first shares a cluster."""
    n = dend.n
    sq = np.zeros((n, n))
    members = [np.array(m) for m in dend.members()]
    for s in range(n - 1):
        a = members[dend.left[s]]
        b = members[dend.right[s]]
        h = dend.heights[s]
        sq[a[:, None], b] = h
        sq[b[:, None], a] = h
    iu = np.triu_indices(n, 1)
    vals = sq[iu]
    return DistanceMatrix(dend.labels, vals, normalized=bool(vals.size == 0 or vals.max() <= 1.0))


def attainable_ks(dend: Dendrogram) -> list[int]:
    """Cluster counts reachable without separating merges of equal height."""
    n = dend.n
    h = dend.heights
    ks = [n]
    for m in range(1, n):
        # keep the m lowest merges; the next one must be strictly higher
        if m == n - 1 or h[m - 1] < h[m]:
            ks.append(n - m)
    return sorted(ks)


def cut(dend: Dendrogram, K: int) -> FlatPartition:
    """Flat partition into exactly ``K`` clusters by dropping the highest merges.

    Raises :class:`UnattainableK` when the ``(n-K)``-th and ``(n-K+1)``-th
    merges share a height, since either choice of which tied merge to drop
    would be arbitrary.
    """
    n = dend.n
    K = int(K)
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in 1..{n}, got {K}")
    m = n - K
    if 0 < m < n - 1 and not dend.heights[m - 1] < dend.heights[m]:
        ks = attainable_ks(dend)
        below = max((k for k in ks if k < K), default=None)
        above = min((k for k in ks if k > K), default=None)
        raise UnattainableK(K, below, above)
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s in range(m):
        parent[find(int(dend.left[s]))] = n + s
        parent[find(int(dend.right[s]))] = n + s
    code: dict[int, int] = {}
    assignment = [code.setdefault(find(i), len(code)) for i in range(n)]
    return FlatPartition(dend.labels, assignment)


def permutation_invariance_check(
    D: DistanceMatrix, method: str = "complete", trials: int = 20, seed: int = 0, tol: float = 1e-12
) -> bool:
    """Whether the cophenetic output survives random relabelings of ``D``.

    Each trial clusters ``D`` under a random label order, maps the cophenetic
    matrix back to the original order and compares it with the unpermuted
    result.
    """
    rng = np.random.default_rng(seed)
    base = cophenetic(linkage(D, method))
    labels = list(D.labels)
    for _ in range(trials):
        perm = [labels[i] for i in rng.permutation(len(labels))]
        coph = cophenetic(linkage(D.reorder(perm), method)).reorder(labels)
        if base.values.size and np.max(np.abs(base.values - coph.values)) > tol:
            return False
    return True
