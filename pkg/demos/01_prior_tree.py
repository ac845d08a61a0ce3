"""
Encoding a prior tree as an ultrametric
=======================================

A rooted tree says which items belong together without saying how far apart
they are. The leaf-share distance turns it into numbers: the distance between
two leaves is the size of the smallest subtree holding both, divided by the
total number of leaves.
"""

import numpy as np

from priorclust import parse_tree, tree_to_ultrametric, ultrametric_fraction, verify_ultrametric

# %%
# A six-leaf tree. Leaves 1 and 2 share a two-leaf subtree, 1..4 share a
# four-leaf subtree, and 5, 6 only meet 1 at the root.
tree = parse_tree("(((1,2),(3,4)),(5,6));")
print("leaves:", tree.labels)

for other in "23456":
    print(f"u(1, {other}) = {ultrametric_fraction(tree, '1', other)}")

# %%
# The full matrix is stored condensed (upper triangle, row major).
u = tree_to_ultrametric(tree)
np.set_printoptions(precision=3, suppress=True)
print(u.square())
print("ultrametric:", verify_ultrametric(u, tol=0.0).ok)

# %%
# Unary chains carry no information and are collapsed when parsing, so these
# two trees encode the same distances.
a = tree_to_ultrametric(parse_tree("((((a,b)),c))"))
b = tree_to_ultrametric(parse_tree("((a,b),c)"))
print("same after collapse:", np.array_equal(a.values, b.values))

# %%
# Items the tree does not know about hang off the root. They are far from
# everything, and they make the existing subtrees relatively smaller.
bigger = tree.extended(list(tree.labels) + ["7", "8"])
print("u(1, 2) with two extra leaves:", ultrametric_fraction(bigger, "1", "2"))
print("u(7, 8):", ultrametric_fraction(bigger, "7", "8"))

# %%
# Parse errors report where they happened.
from priorclust import TreeParseError

for text in ["((1,2),(3,4)", "(1:0.5,2)"]:
    try:
        parse_tree(text)
    except TreeParseError as exc:
        print(f"{text!r}: {exc}")
