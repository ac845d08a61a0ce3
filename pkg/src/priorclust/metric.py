"""Pairwise dissimilarity matrices in condensed form.

A :class:`DistanceMatrix` stores the strict upper triangle of a symmetric,
zero-diagonal dissimilarity over an ordered list of labels, in the same
row-major layout scipy uses (``scipy.spatial.distance.squareform``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DistanceMatrix",
    "LabeledPointSet",
    "AxiomReport",
    "UltrametricCheck",
    "condensed_index",
    "cosine_dissimilarity_matrix",
    "normalize",
    "blend",
    "verify_metric_axioms",
    "verify_ultrametric",
    "linf_distance",
]

DEFAULT_TOL = 1e-9

# 1 - cos(x, x) evaluates to a few ulps instead of 0
_COSINE_NOISE_FLOOR = 8 * np.finfo(float).eps


def condensed_index(n: int, i: int, j: int) -> int:
    """Position of the pair (i, j), i != j, in a condensed vector of n points."""
    if i == j:
        raise ValueError("diagonal entries are not stored")
    if i > j:
        i, j = j, i
    return n * i - i * (i + 1) // 2 + (j - i - 1)


def _check_labels(labels: Iterable[str]) -> tuple[str, ...]:
    labels = tuple(str(lab) for lab in labels)
    if len(set(labels)) != len(labels):
        seen, dups = set(), []
        for lab in labels:
            if lab in seen:
                dups.append(lab)
            seen.add(lab)
        raise ValueError(f"duplicate labels: {sorted(set(dups))}")
    return labels


class DistanceMatrix:
    """Condensed symmetric dissimilarity over ordered labels.

    Parameters
    ----------
    labels : sequence of str
        Unique labels; position i labels row/column i.
    values : array_like
        Condensed vector of length ``n * (n - 1) // 2``.
    normalized : bool
        Whether the values are known to lie in [0, 1].
    """

    __slots__ = ("labels", "values", "normalized", "_index")

    def __init__(self, labels: Sequence[str], values, normalized: bool = False):
        labels = _check_labels(labels)
        n = len(labels)
        vals = np.array(values, dtype=float).reshape(-1)
        if vals.shape[0] != n * (n - 1) // 2:
            raise ValueError(
                f"expected {n * (n - 1) // 2} condensed values for {n} labels, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("distance values must be finite")
        if np.any(vals < 0):
            raise ValueError("distance values must be non-negative")
        if normalized and vals.size and vals.max() > 1.0:
            raise ValueError("normalized matrix has entries above 1")
        vals.flags.writeable = False
        self.labels = labels
        self.values = vals
        self.normalized = bool(normalized)
        self._index = {lab: i for i, lab in enumerate(labels)}

    @classmethod
    def from_square(cls, labels: Sequence[str], square, normalized: bool = False, tol: float = 0.0):
        sq = np.asarray(square, dtype=float)
        n = len(labels)
        if sq.shape != (n, n):
            raise ValueError(f"square matrix must be {n}x{n}, got {sq.shape}")
        if np.any(np.abs(np.diag(sq)) > tol):
            raise ValueError("square matrix has a nonzero diagonal")
        if np.any(np.abs(sq - sq.T) > tol):
            raise ValueError("square matrix is not symmetric")
        iu = np.triu_indices(n, 1)
        return cls(labels, sq[iu], normalized=normalized)

    @property
    def n(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"DistanceMatrix(n={self.n}, normalized={self.normalized})"

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def get(self, a: str, b: str) -> float:
        i, j = self.index(a), self.index(b)
        if i == j:
            return 0.0
        return float(self.values[condensed_index(self.n, i, j)])

    def square(self) -> np.ndarray:
        n = self.n
        sq = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        sq[iu] = self.values
        sq[(iu[1], iu[0])] = self.values
        return sq

    def subset(self, labels: Sequence[str]) -> "DistanceMatrix":
        """Restrict (and reorder) to ``labels``, which must all be present."""
        idx = np.array([self.index(lab) for lab in labels], dtype=int)
        if len(set(idx.tolist())) != len(idx):
            raise ValueError("subset labels must be unique")
        sq = self.square()[np.ix_(idx, idx)]
        iu = np.triu_indices(len(idx), 1)
        return DistanceMatrix(labels, sq[iu], normalized=self.normalized)

    def reorder(self, labels: Sequence[str]) -> "DistanceMatrix":
        """Same matrix under a permutation of its labels."""
        if set(labels) != set(self.labels) or len(labels) != self.n:
            raise ValueError("reorder needs a permutation of the existing labels")
        return self.subset(labels)

    def with_values(self, values, normalized: bool | None = None) -> "DistanceMatrix":
        return DistanceMatrix(
            self.labels, values, self.normalized if normalized is None else normalized
        )


@dataclass(frozen=True, eq=False)
class LabeledPointSet:
    """Labelled non-negative embedding vectors, one row per label."""

    labels: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        labels = _check_labels(self.labels)
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim != 2 or vec.shape[0] != len(labels):
            raise ValueError("vectors must be a 2-D array with one row per label")
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding components must be finite")
        neg = np.flatnonzero(np.any(vec < 0, axis=1))
        if neg.size:
            raise ValueError(f"negative embedding components for labels {[labels[i] for i in neg]}")
        zero = np.flatnonzero(~np.any(vec != 0, axis=1))
        if zero.size:
            raise ValueError(f"zero embedding vectors for labels {[labels[i] for i in zero]}")
        vec.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def from_rows(cls, labels: Sequence[str], rows: Sequence[Sequence[float]]) -> "LabeledPointSet":
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise ValueError(f"embedding dimension mismatch: found widths {sorted(widths)}")
        return cls(tuple(labels), np.array(rows, dtype=float))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def cosine_dissimilarity_matrix(points: LabeledPointSet) -> DistanceMatrix:
    """``1 - cos(x_i, x_j)`` for every pair; in [0, 1] for non-negative vectors."""
    x = points.vectors
    # scale rows to max 1 first so tiny or huge vectors do not under/overflow the norm
    x = x / x.max(axis=1, keepdims=True)
    unit = x / np.linalg.norm(x, axis=1)[:, None]
    cos = np.clip(unit @ unit.T, 0.0, 1.0)
    n = x.shape[0]
    iu = np.triu_indices(n, 1)
    d = 1.0 - cos[iu]
    d[d < _COSINE_NOISE_FLOOR] = 0.0
    return DistanceMatrix(points.labels, d, normalized=True)


def normalize(matrix: DistanceMatrix) -> DistanceMatrix:
    """Divide every entry by the maximum so the largest becomes exactly 1."""
    vals = matrix.values
    top = vals.max() if vals.size else 0.0
    if top == 0.0:
        warnings.warn("all-zero distance matrix left unscaled", RuntimeWarning, stacklevel=2)
        return matrix.with_values(vals, normalized=True)
    return matrix.with_values(vals / top, normalized=True)


def _check_aligned(a: DistanceMatrix, b: DistanceMatrix) -> None:
    if a.labels == b.labels:
        return
    if set(a.labels) != set(b.labels):
        missing = sorted(set(a.labels) ^ set(b.labels))
        raise ValueError(f"label sets differ; mismatched labels: {missing[:10]}")
    raise ValueError("label order differs; align one matrix with .reorder() first")


def blend(d_p: DistanceMatrix, u_t: DistanceMatrix, alpha: float) -> DistanceMatrix:
    """Convex combination ``(1 - alpha) * d_p + alpha * u_t``.

    Both inputs must share label order and lie in [0, 1]. ``alpha=0`` returns
    ``d_p``'s values and ``alpha=1`` returns ``u_t``'s values bit for bit.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"blend weight must lie in [0, 1], got {alpha}")
    _check_aligned(d_p, u_t)
    for name, m in (("d_p", d_p), ("u_t", u_t)):
        if m.values.size and m.values.max() > 1.0:
            raise ValueError(f"{name} is not normalized into [0, 1]; call normalize() first")
    if alpha == 0.0:
        return DistanceMatrix(d_p.labels, d_p.values, normalized=True)
    if alpha == 1.0:
        return DistanceMatrix(u_t.labels, u_t.values, normalized=True)
    vals = (1.0 - alpha) * d_p.values + alpha * u_t.values
    # rounding can overshoot 1 by an ulp
    np.minimum(vals, 1.0, out=vals)
    return DistanceMatrix(d_p.labels, vals, normalized=True)


class AxiomReport(NamedTuple):
    non_negative: bool
    triangle: bool
    n_violations: int
    worst_excess: float
    witness: tuple[str, str, str] | None

    @property
    def ok(self) -> bool:
        return self.non_negative and self.triangle


class UltrametricCheck(NamedTuple):
    ok: bool
    witness: tuple[str, str, str] | None

    def __bool__(self) -> bool:
        return self.ok


def verify_metric_axioms(matrix: DistanceMatrix, tol: float = DEFAULT_TOL) -> AxiomReport:
    """Check non-negativity and ``d(i,k) <= d(i,j) + d(j,k)`` on every triple.

    The witness is ``(i, j, k)``: the direct distance i-k exceeds the detour
    through j.
    """
    d = matrix.square()
    n = matrix.n
    count = 0
    worst = 0.0
    first = None  # smallest (i, k, j), for reproducible reports
    for j in range(n):
        excess = d - (d[:, j][:, None] + d[j, :][None, :])
        bad = excess > tol
        c = int(bad.sum())
        if c:
            count += c
            worst = max(worst, float(excess[bad].max()))
            ii, kk = np.nonzero(bad)
            i, k = min(zip(ii.tolist(), kk.tolist()))
            if first is None or (i, k, j) < first:
                first = (i, k, j)
    witness = None
    if first is not None:
        i, k, j = first
        witness = (matrix.labels[i], matrix.labels[j], matrix.labels[k])
    return AxiomReport(
        non_negative=bool(np.all(matrix.values >= 0)),
        triangle=count == 0,
        # each violating unordered triple shows up as (i,k) and (k,i)
        n_violations=count // 2,
        worst_excess=worst,
        witness=witness,
    )


def verify_ultrametric(matrix: DistanceMatrix, tol: float = DEFAULT_TOL) -> UltrametricCheck:
    """Check ``d(i,k) <= max(d(i,j), d(j,k))`` on every triple."""
    d = matrix.square()
    n = matrix.n
    for j in range(n):
        bad = d > np.maximum(d[:, j][:, None], d[j, :][None, :]) + tol
        if bad.any():
            # earliest j first, then smallest (i, k)
            ii, kk = np.nonzero(bad)
            i, k = min(zip(ii.tolist(), kk.tolist()))
            return UltrametricCheck(False, (matrix.labels[i], matrix.labels[j], matrix.labels[k]))
    return UltrametricCheck(True, None)


def linf_distance(a: DistanceMatrix, b: DistanceMatrix) -> float:
    """Largest absolute entrywise difference between two aligned matrices."""
    _check_aligned(a, b)
    if a.values.size == 0:
        return 0.0
    return float(np.max(np.abs(a.values - b.values)))


def is_close(a: DistanceMatrix, b: DistanceMatrix, tol: float = 0.0) -> bool:
    return a.labels == b.labels and (a.values.size == 0 or linf_distance(a, b) <= tol)

