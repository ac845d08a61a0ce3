"""Synthetic substitution data where neither distance alone is right.

Items sit in ``n_coarse`` coarse groups, each holding ``n_fine`` fine groups
of ``group_size`` items.

* The prior tree gets the coarse groups right but shuffles items between the
  fine subtrees of each coarse group, so its fine level is wrong.
* Embeddings put each fine group on its own topic axis with small noise, so
  the cosine distance sees fine groups clearly but knows nothing about the
  coarse level. In each fine group one "bridge" item also loads on a topic
  from a different coarse group, which lets single linkage chain unrelated
  fine groups together.
* Each keyword buys mostly from one fine group and a little from a sibling
  fine group of the same coarse group, so merging siblings raises purity and
  merging across coarse groups does not.

Blending in the prior pushes bridges apart while keeping the fine groups the
embeddings found, so an interior blend weight wins.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import KeywordRecord
from .metric import DistanceMatrix, LabeledPointSet, cosine_dissimilarity_matrix
from .tree import PriorTree, _Raw

__all__ = ["SubstitutionFixture", "substitution_fixture", "write_fixture"]


@dataclass(frozen=True, eq=False)
class SubstitutionFixture:
    tree: PriorTree
    points: LabeledPointSet
    d_p: DistanceMatrix
    records: tuple[KeywordRecord, ...]
    fine: np.ndarray
    coarse: np.ndarray

    @property
    def labels(self) -> tuple[str, ...]:
        return self.points.labels


def substitution_fixture(
    seed: int = 0,
    n_coarse: int = 4,
    n_fine: int = 3,
    group_size: int = 4,
    bridge: float = 0.45,
    noise: float = 0.08,
    keywords_per_group: int = 2,
) -> SubstitutionFixture:
    rng = np.random.default_rng(seed)
    n_groups = n_coarse * n_fine
    labels, fine, coarse = [], [], []
    for c in range(n_coarse):
        for f in range(n_fine):
            for s in range(group_size):
                labels.append(f"c{c}f{f}i{s}")
                fine.append(c * n_fine + f)
                coarse.append(c)
    fine = np.array(fine)
    coarse = np.array(coarse)
    n = len(labels)

    x = noise * rng.random((n, n_groups))
    x[np.arange(n), fine] += 1.0
    for g in range(n_groups):
        i = np.flatnonzero(fine == g)[0]
        far = rng.choice([h for h in range(n_groups) if h // n_fine != g // n_fine])
        x[i] = noise * rng.random(n_groups)
        x[i, g] += 1.0 - bridge
        x[i, far] += bridge

    coarse_nodes = []
    for c in range(n_coarse):
        items = [labels[i] for i in np.flatnonzero(coarse == c)]
        perm = rng.permutation(len(items))
        subs = [
            _Raw(None, [_Raw(items[j]) for j in perm[k * group_size : (k + 1) * group_size]])
            for k in range(n_fine)
        ]
        coarse_nodes.append(_Raw(f"coarse{c}", subs))
    tree = PriorTree(_Raw("root", coarse_nodes))

    records = []
    for g in range(n_groups):
        c, f = divmod(g, n_fine)
        sibling = c * n_fine + (f + 1) % n_fine
        own = [labels[i] for i in np.flatnonzero(fine == g)]
        sib = [labels[i] for i in np.flatnonzero(fine == sibling)]
        for r in range(keywords_per_group):
            bought = [(item, int(rng.integers(1, 4))) for item in own]
            bought += [(str(item), 1) for item in rng.choice(sib, size=min(2, len(sib)), replace=False)]
            records.append(KeywordRecord(f"kw{g}_{r}", tuple(bought)))

    points = LabeledPointSet(tuple(labels), x)
    return SubstitutionFixture(
        tree=tree,
        points=points,
        d_p=cosine_dissimilarity_matrix(points),
        records=tuple(records),
        fine=fine,
        coarse=coarse,
    )


def write_fixture(
    fx: SubstitutionFixture,
    directory,
    alphas: Sequence[float] = tuple(i / 10 for i in range(11)),
    ks: Sequence[int] = (4, 6, 8, 10, 12),
    k: int = 1,
    seed: int = 0,
) -> Path:
    """Write the fixture as input files plus a ready-to-run ``tune.ini``.

    Returns the config path. Outputs land in ``directory/out``.
    """
    from . import formats

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    formats.atomic_write_text(d / "prior.nwk", fx.tree.to_newick() + "\n")
    formats.write_embeddings(d / "embeddings.csv", fx.points)
    formats.write_records(d / "records.csv", fx.records)
    config = f"""[inputs]
tree = prior.nwk
embeddings = embeddings.csv
records = records.csv

[grid]
alphas = {" ".join(repr(float(a)) for a in alphas)}
ks = {" ".join(str(int(x)) for x in ks)}
metric = purity
aggregation = mean

[partition]
strategy = tree-cut
k = {int(k)}
seed = {int(seed)}

[outputs]
report = out/grid.csv
dendrogram = out/final.csv
newick = out/final.nwk
"""
    path = d / "tune.ini"
    formats.atomic_write_text(path, config)
    return path
