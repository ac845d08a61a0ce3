"""Substitution-group quality of a flat partition against keyword purchases.

For each search keyword, its purchases fall into clusters of the partition
and form a categorical distribution. Purity is the share captured by the
top cluster; entropy is the Shannon entropy (natural log) of that
distribution. Purity and entropy average keywords uniformly, weighted
entropy weights each keyword by its purchase count.

Sums over keywords and clusters use :func:`math.fsum`, so results do not
depend on record order or cluster numbering.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .linkage import FlatPartition

__all__ = [
    "KeywordRecord",
    "MetricReport",
    "METRICS",
    "HIGHER_IS_BETTER",
    "purity",
    "entropy",
    "weighted_entropy",
    "evaluate",
    "normalize_report",
    "restrict_records",
]

METRICS = ("purity", "entropy", "weighted_entropy")
HIGHER_IS_BETTER = {"purity": True, "entropy": False, "weighted_entropy": False}


@dataclass(frozen=True)
class KeywordRecord:
    """Purchases made after searching one keyword, as ``(item, count)`` pairs."""

    keyword: str
    purchases: tuple[tuple[str, int], ...]

    def __post_init__(self):
        merged: dict[str, int] = {}
        for item, count in self.purchases:
            if int(count) != count or count < 1:
                raise ValueError(f"keyword {self.keyword!r}: purchase count {count!r} must be a positive integer")
            merged[str(item)] = merged.get(str(item), 0) + int(count)
        if not merged:
            raise ValueError(f"keyword {self.keyword!r} has no purchases")
        object.__setattr__(self, "purchases", tuple(merged.items()))

    @property
    def total(self) -> int:
        return sum(c for _, c in self.purchases)


@dataclass(frozen=True)
class MetricReport:
    purity: float
    entropy: float
    weighted_entropy: float
    keywords_evaluated: int

    def __getitem__(self, name: str) -> float:
        if name not in METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {
            "purity": self.purity,
            "entropy": self.entropy,
            "weighted_entropy": self.weighted_entropy,
            "keywords_evaluated": self.keywords_evaluated,
        }


def _distributions(partition: FlatPartition, records: Sequence[KeywordRecord]):
    if not records:
        raise ValueError("no keyword records to evaluate")
    index = dict(zip(partition.labels, partition.assignment.tolist()))
    K = partition.K
    out = []
    for rec in records:
        counts = np.zeros(K, dtype=np.int64)
        for item, c in rec.purchases:
            try:
                counts[index[item]] += c
            except KeyError:
                raise ValueError(
                    f"keyword {rec.keyword!r} purchased {item!r}, which is not in the partition"
                ) from None
        out.append(counts)
    return out


def _entropy(counts: np.ndarray) -> float:
    total = int(counts.sum())
    p = counts[counts > 0] / total
    # sort so the sum does not depend on cluster numbering
    return max(0.0, -math.fsum(sorted((p * np.log(p)).tolist())))


def purity(partition: FlatPartition, records: Sequence[KeywordRecord]) -> float:
    """Mean over keywords of the purchase share in the keyword's top cluster."""
    dists = _distributions(partition, records)
    return math.fsum(int(c.max()) / int(c.sum()) for c in dists) / len(dists)


def entropy(partition: FlatPartition, records: Sequence[KeywordRecord]) -> float:
    dists = _distributions(partition, records)
    return math.fsum(_entropy(c) for c in dists) / len(dists)


def weighted_entropy(partition: FlatPartition, records: Sequence[KeywordRecord]) -> float:
    dists = _distributions(partition, records)
    weights = [int(c.sum()) for c in dists]
    return math.fsum(w * _entropy(c) for w, c in zip(weights, dists)) / sum(weights)


def evaluate(partition: FlatPartition, records: Sequence[KeywordRecord]) -> MetricReport:
    """All three metrics in one pass."""
    dists = _distributions(partition, records)
    ents = [_entropy(c) for c in dists]
    weights = [int(c.sum()) for c in dists]
    return MetricReport(
        purity=math.fsum(int(c.max()) / w for c, w in zip(dists, weights)) / len(dists),
        entropy=math.fsum(ents) / len(ents),
        weighted_entropy=math.fsum(w * h for w, h in zip(weights, ents)) / sum(weights),
        keywords_evaluated=len(dists),
    )


def normalize_report(reports: Sequence[MetricReport]) -> list[MetricReport]:
    """Scale each metric column by its maximum over ``reports``.

    The best purity and the worst entropies become 1.0. A column whose
    maximum is 0 is left as is.
    """
    if not reports:
        raise ValueError("nothing to normalize")
    scale = {}
    for name in METRICS:
        top = max(r[name] for r in reports)
        if top == 0:
            warnings.warn(f"{name} is zero in every report; left unnormalized", RuntimeWarning, stacklevel=2)
            top = 1.0
        scale[name] = top
    return [replace(r, **{name: r[name] / scale[name] for name in METRICS}) for r in reports]


def restrict_records(records: Iterable[KeywordRecord], labels: Iterable[str]) -> list[KeywordRecord]:
    """Keep only purchases of ``labels``; drop keywords left with none."""
    keep = set(labels)
    out = []
    for rec in records:
        bought = tuple((item, c) for item, c in rec.purchases if item in keep)
        if bought:
            out.append(KeywordRecord(rec.keyword, bought))
    return out
