"""Prior ontology trees and their leaf-count ultrametric.

Two leaves are as far apart as the fraction of all leaves sitting under
their lowest common ancestor: siblings in a small subtree are close, leaves
joined only at the root are at distance 1.

Trees come from nested-parenthesis text (``((a,b),c);``) or from JSON
objects ``{"name": ..., "children": [...]}``. Unary internal nodes are
collapsed on construction, so every internal node has at least two
children and leaf counts strictly increase towards the root.
"""
from __future__ import annotations

import json
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .metric import DistanceMatrix

__all__ = [
    "PriorTree",
    "TreeParseError",
    "parse_tree",
    "parse_newick",
    "parse_json_tree",
    "lca",
    "ultrametric_distance",
    "ultrametric_fraction",
    "tree_to_ultrametric",
]


class TreeParseError(ValueError):
    """Malformed tree text. ``position`` is a 0-based character offset, or None."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class _Raw:
    __slots__ = ("name", "children")

    def __init__(self, name, children=None):
        self.name = name
        self.children = children  # None marks a leaf


class PriorTree:
    """Immutable rooted tree with labelled leaves.

    Nodes are numbered in preorder, so the subtree of node ``v`` is the
    contiguous block ``v .. subtree_end[v] - 1``. Construction builds an
    Euler tour with a sparse table over tour depths, giving O(1) LCA queries
    after O(m log m) preprocessing.
    """

    def __init__(self, root: _Raw):
        root = _canonicalize(root)
        parent: list[int] = []
        children: list[list[int]] = []
        names: list[str | None] = []
        is_leaf: list[bool] = []
        stack = [(root, -1)]
        while stack:
            node, par = stack.pop()
            idx = len(parent)
            parent.append(par)
            children.append([])
            names.append(node.name)
            is_leaf.append(node.children is None)
            if par >= 0:
                children[par].append(idx)
            if node.children is not None:
                for ch in reversed(node.children):
                    stack.append((ch, idx))

        m = len(parent)
        self.parent = np.array(parent, dtype=np.int64)
        self.children = tuple(tuple(c) for c in children)
        self.names = tuple(names)
        self.is_leaf = np.array(is_leaf, dtype=bool)
        leaf_nodes = np.flatnonzero(self.is_leaf)
        self.leaf_nodes = leaf_nodes
        self.labels = tuple(names[v] for v in leaf_nodes)
        self._leaf_of = {}
        for v in leaf_nodes:
            lab = names[v]
            if lab in self._leaf_of:
                raise TreeParseError(f"duplicate leaf label {lab!r}")
            self._leaf_of[lab] = int(v)

        depth = np.zeros(m, dtype=np.int64)
        for v in range(1, m):
            depth[v] = depth[parent[v]] + 1
        self.depth = depth

        counts = self.is_leaf.astype(np.int64)
        end = np.arange(1, m + 1, dtype=np.int64)
        for v in range(m - 1, 0, -1):  # preorder reversed: children before parents
            p = parent[v]
            counts[p] += counts[v]
            end[p] = max(end[p], end[v])
        self.subtree_leaf_counts = counts
        self.subtree_end = end
        for arr in (self.parent, self.is_leaf, self.leaf_nodes, self.depth, counts, end):
            arr.flags.writeable = False
        self._build_lca_index()

    @classmethod
    def from_nested(cls, obj) -> "PriorTree":
        """Build from nested lists/tuples whose non-sequence items are leaf labels.

        >>> PriorTree.from_nested([["1", "2"], "3"]).labels
        ('1', '2', '3')
        """
        def build(o):
            if isinstance(o, (list, tuple)):
                if not o:
                    raise TreeParseError("empty subtree")
                return _Raw(None, [build(c) for c in o])
            return _Raw(str(o))

        return cls(build(obj))

    # -- construction -------------------------------------------------------

    def _build_lca_index(self) -> None:
        m = len(self.parent)
        tour = []
        first = np.zeros(m, dtype=np.int64)
        stack = [(0, 0)]
        while stack:
            v, k = stack.pop()
            if k == 0:
                first[v] = len(tour)
            tour.append(v)
            if k < len(self.children[v]):
                stack.append((v, k + 1))
                stack.append((self.children[v][k], 0))
        tour = np.array(tour, dtype=np.int64)
        tdepth = self.depth[tour]
        length = len(tour)
        levels = [np.arange(length, dtype=np.int64)]
        span = 1
        while 2 * span <= length:
            prev = levels[-1]
            a = prev[: length - 2 * span + 1]
            b = prev[span : span + length - 2 * span + 1]
            levels.append(np.where(tdepth[a] <= tdepth[b], a, b))
            span *= 2
        self._tour = tour
        self._tour_depth = tdepth
        self._first = first
        self._sparse = levels
        log = np.zeros(length + 1, dtype=np.int64)
        for i in range(2, length + 1):
            log[i] = log[i // 2] + 1
        self._log = log

    # -- basic accessors ----------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return int(self.subtree_leaf_counts[0])

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return 0

    def __contains__(self, label: str) -> bool:
        return label in self._leaf_of

    def __repr__(self) -> str:
        return f"PriorTree(n_leaves={self.n_leaves}, n_nodes={self.n_nodes})"

    def leaf(self, label: str) -> int:
        try:
            return self._leaf_of[label]
        except KeyError:
            raise KeyError(f"unknown leaf label {label!r}") from None

    def leaves_under(self, node: int) -> tuple[str, ...]:
        """Leaf labels of the subtree rooted at ``node``, in preorder."""
        lo, hi = node, int(self.subtree_end[node])
        sel = self.leaf_nodes[(self.leaf_nodes >= lo) & (self.leaf_nodes < hi)]
        return tuple(self.names[v] for v in sel)

    def level_frontier(self, level: int) -> list[int]:
        """Nodes at depth ``level`` plus any shallower leaves, in preorder."""
        sel = (self.depth == level) | (self.is_leaf & (self.depth < level))
        return np.flatnonzero(sel).tolist()

    # -- queries --------------------------------------------------------------

    def _lca_nodes(self, u, v):
        fu, fv = self._first[u], self._first[v]
        lo, hi = np.minimum(fu, fv), np.maximum(fu, fv)
        k = self._log[hi - lo + 1]
        if np.ndim(k) == 0:
            table = self._sparse[k]
            a, b = table[lo], table[hi - (1 << int(k)) + 1]
            return self._tour[a] if self._tour_depth[a] <= self._tour_depth[b] else self._tour[b]
        out = np.empty(len(lo), dtype=np.int64)
        for level in np.unique(k):
            sel = k == level
            table = self._sparse[level]
            a = table[lo[sel]]
            b = table[hi[sel] - (1 << int(level)) + 1]
            out[sel] = np.where(self._tour_depth[a] <= self._tour_depth[b], self._tour[a], self._tour[b])
        return out

    def lca(self, a: str, b: str) -> int:
        return int(self._lca_nodes(self.leaf(a), self.leaf(b)))

    def pair_counts(self, order: Sequence[str]) -> np.ndarray:
        """Condensed integer leaf counts of the LCA of every pair in ``order``."""
        nodes = np.array([self.leaf(lab) for lab in order], dtype=np.int64)
        n = len(nodes)
        if n < 2:
            return np.zeros(0, dtype=np.int64)
        i, j = np.triu_indices(n, 1)
        return self.subtree_leaf_counts[self._lca_nodes(nodes[i], nodes[j])]

    # -- derived trees ------------------------------------------------------

    def _to_raw(self, v: int = 0) -> _Raw:
        raws = [None] * self.n_nodes
        for u in range(self.n_nodes - 1, -1, -1):
            if self.is_leaf[u]:
                raws[u] = _Raw(self.names[u])
            else:
                raws[u] = _Raw(self.names[u], [raws[c] for c in self.children[u]])
        return raws[v]

    def extended(self, labels: Iterable[str]) -> "PriorTree":
        """Copy with every label missing from the tree attached under the root."""
        missing = [lab for lab in dict.fromkeys(labels) if lab not in self._leaf_of]
        if not missing:
            return self
        root = self._to_raw()
        extra = [_Raw(lab) for lab in missing]
        if root.children is None:
            root = _Raw(None, [root] + extra)
        else:
            root = _Raw(root.name, root.children + extra)
        return PriorTree(root)

    def to_newick(self) -> str:
        parts = []
        stack: list = [(0, 0)]
        while stack:
            v, k = stack.pop()
            if self.is_leaf[v]:
                parts.append(_quote(self.names[v]))
                continue
            kids = self.children[v]
            if k == 0:
                parts.append("(")
            if k < len(kids):
                if k > 0:
                    parts.append(",")
                stack.append((v, k + 1))
                stack.append((kids[k], 0))
            else:
                parts.append(")")
                if self.names[v] is not None:
                    parts.append(_quote(self.names[v]))
        return "".join(parts) + ";"


def _canonicalize(root: _Raw) -> _Raw:
    """Collapse unary chains, bottom-up and without recursion."""
    order = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        if node.children is not None:
            stack.extend(node.children)
    replaced = {}
    for node in reversed(order):
        if node.children is None:
            replaced[id(node)] = node
            continue
        kids = [replaced[id(c)] for c in node.children]
        if not kids:
            raise TreeParseError("internal node without children")
        replaced[id(node)] = kids[0] if len(kids) == 1 else _Raw(node.name, kids)
    return replaced[id(root)]


# -- text formats --------------------------------------------------------------

_SPECIAL = set('(),;:"[]')


def _quote(label: str) -> str:
    if label and not any(c in _SPECIAL or c.isspace() or c == "\\" for c in label):
        return label
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def parse_newick(text: str) -> PriorTree:
    """Parse nested-parenthesis text without branch lengths.

    Labels are bare words or double-quoted strings with backslash escapes.
    A name after a closing parenthesis labels the internal node.
    """
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def read_name():
        nonlocal pos
        if pos < n and text[pos] == '"':
            start = pos
            pos += 1
            out = []
            while True:
                if pos >= n:
                    raise TreeParseError("unterminated quoted label", start)
                c = text[pos]
                if c == "\\":
                    if pos + 1 >= n:
                        raise TreeParseError("dangling escape", pos)
                    nxt = text[pos + 1]
                    out.append({"n": "\n", "t": "\t"}.get(nxt, nxt))
                    pos += 2
                elif c == '"':
                    pos += 1
                    return "".join(out)
                else:
                    out.append(c)
                    pos += 1
        start = pos
        while pos < n and not (text[pos] in _SPECIAL or text[pos].isspace()):
            pos += 1
        return text[start:pos] if pos > start else None

    skip_ws()
    if pos >= n or text[pos] == ";":
        raise TreeParseError("empty tree", pos)

    # each frame: (open-paren position, children so far)
    stack: list[tuple[int, list]] = []
    result = None
    expect_item = True
    while True:
        skip_ws()
        if pos >= n:
            if stack:
                raise TreeParseError("unbalanced '('", stack[-1][0])
            break
        c = text[pos]
        if expect_item:
            if c == "(":
                stack.append((pos, []))
                pos += 1
                continue
            if c == ":":
                raise TreeParseError("branch lengths are not supported", pos)
            if c in "),;":
                raise TreeParseError(f"expected a label or '(' but found {c!r}", pos)
            start = pos
            name = read_name()
            if name is None:
                raise TreeParseError(f"unexpected character {c!r}", start)
            item = _Raw(name)
            expect_item = False
        else:
            if c == ",":
                if not stack:
                    raise TreeParseError("',' outside parentheses", pos)
                pos += 1
                expect_item = True
                continue
            if c == ")":
                if not stack:
                    raise TreeParseError("unbalanced ')'", pos)
                _, kids = stack.pop()
                pos += 1
                skip_ws()
                name = None
                if pos < n and text[pos] not in "(),;:":
                    name = read_name()
                item = _Raw(name, kids)
            elif c == ";":
                if stack:
                    raise TreeParseError("';' before all parentheses closed", pos)
                pos += 1
                skip_ws()
                if pos < n:
                    raise TreeParseError("trailing text after ';'", pos)
                break
            elif c == ":":
                raise TreeParseError("branch lengths are not supported", pos)
            else:
                raise TreeParseError(f"expected ',', ')' or ';' but found {c!r}", pos)
        # attach finished item
        if stack:
            stack[-1][1].append(item)
        elif result is None:
            result = item
        else:
            raise TreeParseError("more than one top-level tree", pos)
        expect_item = False
    if result is None:
        raise TreeParseError("empty tree", 0)
    if result.children is not None and not result.children:
        raise TreeParseError("empty tree", 0)
    return PriorTree(result)


def parse_json_tree(text: str) -> PriorTree:
    """Parse ``{"name": str, "children": [...]}``; leaves omit ``children``."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"invalid JSON: {exc.msg}", exc.pos) from None

    def build(o, path):
        if not isinstance(o, dict):
            raise TreeParseError(f"tree node at {path} is not an object")
        name = o.get("name")
        if name is not None and not isinstance(name, str):
            raise TreeParseError(f"node name at {path} is not a string")
        if "children" not in o:
            if name is None:
                raise TreeParseError(f"leaf at {path} has no name")
            return _Raw(name)
        kids = o["children"]
        if not isinstance(kids, list) or not kids:
            raise TreeParseError(f"'children' at {path} must be a non-empty list")
        return _Raw(name, [build(k, f"{path}/{i}") for i, k in enumerate(kids)])

    return PriorTree(build(obj, ""))


def parse_tree(text: str, fmt: str = "newick") -> PriorTree:
    """Parse ``text`` as ``"newick"`` (nested parentheses) or ``"json"``."""
    if fmt == "newick":
        return parse_newick(text)
    if fmt == "json":
        return parse_json_tree(text)
    raise ValueError(f"unknown tree format {fmt!r}")


# -- the leaf-count ultrametric ----------------------------------------------------


def lca(tree: PriorTree, a: str, b: str) -> int:
    return tree.lca(a, b)


def ultrametric_fraction(tree: PriorTree, a: str, b: str) -> Fraction:
    """Exact leaf share of the LCA subtree of ``a`` and ``b``."""
    return Fraction(int(tree.subtree_leaf_counts[tree.lca(a, b)]), tree.n_leaves)


def ultrametric_distance(tree: PriorTree, a: str, b: str) -> float:
    """Leaf share of the LCA subtree, ``|leaves(lca)| / |leaves(root)|``.

    For ``a == b`` this is ``1/n``; matrices built from the tree store 0 on
    the diagonal instead.
    """
    return int(tree.subtree_leaf_counts[tree.lca(a, b)]) / tree.n_leaves


def tree_to_ultrametric(tree: PriorTree, order: Sequence[str] | None = None) -> DistanceMatrix:
    """Condensed leaf-share matrix over ``order`` (default: tree leaf order).

    ``order`` must be a permutation of the tree's leaf labels. Each entry is
    one integer division, so values are exactly ``k / n`` correctly rounded.
    """
    order = tree.labels if order is None else tuple(order)
    if len(order) != len(set(order)):
        raise ValueError("order has duplicate labels")
    missing = set(tree.labels) - set(order)
    extra = set(order) - set(tree.labels)
    if missing or extra:
        raise ValueError(
            f"order must list exactly the tree leaves; missing {sorted(missing)[:10]}, "
            f"extra {sorted(extra)[:10]}"
        )
    counts = tree.pair_counts(order)
    return DistanceMatrix(order, counts / tree.n_leaves, normalized=True)
