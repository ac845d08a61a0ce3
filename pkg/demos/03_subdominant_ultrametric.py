"""
Single linkage as the sub-dominant ultrametric
==============================================

Single linkage heights are bottleneck path lengths: the cophenetic distance
between two points is the smallest possible largest step on a path between
them. That makes it the largest ultrametric lying below the input, and it
moves no more than the input does.
"""

import numpy as np

from priorclust import DistanceMatrix, cophenetic, linf_distance, single_linkage, verify_metric_axioms

rng = np.random.default_rng(0)
pts = rng.random((8, 2))
sq = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
d = DistanceMatrix.from_square([f"p{i}" for i in range(8)], sq)

c = cophenetic(single_linkage(d))

# bottleneck distances by brute force, (min, max) Floyd-Warshall
mm = sq.copy()
for k in range(len(mm)):
    mm = np.minimum(mm, np.maximum(mm[:, [k]], mm[[k], :]))
np.fill_diagonal(mm, 0)

print("equals bottleneck distances:", np.allclose(c.square(), mm, atol=1e-12, rtol=0))
print("never above the input:", bool(np.all(c.values <= d.values)))
print("metric:", verify_metric_axioms(c).ok)

# %%
# Stability: perturb every entry by at most eps and watch the output.
for eps in (1e-3, 1e-2, 1e-1):
    noisy = d.with_values(np.maximum(d.values + rng.uniform(-eps, eps, d.values.shape), 0), normalized=False)
    moved = linf_distance(c, cophenetic(single_linkage(noisy)))
    print(f"eps={eps:g}: input moved {linf_distance(d, noisy):.4f}, output moved {moved:.4f}")
