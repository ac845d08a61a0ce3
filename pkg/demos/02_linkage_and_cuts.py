"""
Linkages, ties and flat cuts
============================

On an ultrametric, single, complete and average linkage all recover the same
dendrogram, whatever order the points come in. Off ultrametrics, ties make
complete linkage depend on the input order. Ties also make some cluster counts
impossible to cut at.
"""

import itertools

import numpy as np

from priorclust import (
    DistanceMatrix,
    UnattainableK,
    attainable_ks,
    cophenetic,
    cut,
    linkage,
    parse_tree,
    permutation_invariance_check,
    tree_to_ultrametric,
)

u = tree_to_ultrametric(parse_tree("(((1,2),(3,4)),(5,6));"))

for method in ("single", "complete", "average"):
    dend = linkage(u, method)
    same = np.array_equal(cophenetic(dend).values, u.values)
    print(f"{method:>8}: {dend.to_newick()}  cophenetic == input: {same}")

# %%
# Shuffle the rows a few times; nothing changes.
print("order-independent:", all(permutation_invariance_check(u, m, trials=20) for m in ("complete", "average")))

# %%
# Now a metric that is not ultrametric. a-b and b-c tie at 1, so complete
# linkage has to pick one, and the rest of the tree follows from that pick.
sq = np.array(
    [
        [0.0, 1.0, 2.0, 3.0],
        [1.0, 0.0, 1.0, 2.5],
        [2.0, 1.0, 0.0, 1.5],
        [3.0, 2.5, 1.5, 0.0],
    ]
)
m = DistanceMatrix.from_square(list("abcd"), sq)
seen = {}
for perm in itertools.permutations("abcd"):
    c = cophenetic(linkage(m.reorder(list(perm)), "complete")).reorder(list("abcd"))
    seen.setdefault(tuple(c.values.tolist()), "".join(perm))
for values, example in seen.items():
    print(f"order {example}: cophenetic {values}")

# %%
# Cutting. Three merges happen at height 1/3, so we can stop before all of
# them (6 clusters) or after all of them (3 clusters) but not in between.
dend = linkage(u, "single")
print("attainable K:", attainable_ks(dend))
print("K=3:", cut(dend, 3).clusters())

try:
    cut(dend, 4)
except UnattainableK as exc:
    print(exc)
