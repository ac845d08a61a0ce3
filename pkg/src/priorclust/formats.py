"""File formats.

Every writer goes through :func:`atomic_write_text` (temp file + rename) and
prints floats with ``repr``, the shortest decimal string that round-trips a
float64, so write/read cycles are bit exact and reruns are byte identical.

Matrix and dendrogram files carry their label order in a sidecar CSV at
``<path>.labels``.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .evaluation import KeywordRecord
from .linkage import Dendrogram, FlatPartition
from .metric import DistanceMatrix, LabeledPointSet
from .tree import PriorTree, parse_tree

__all__ = [
    "atomic_write_text",
    "tree_format_for",
    "read_tree",
    "read_embeddings",
    "write_embeddings",
    "write_matrix",
    "read_matrix",
    "write_dendrogram",
    "read_dendrogram",
    "write_partition",
    "read_partition",
    "read_records",
    "write_records",
    "sidecar_path",
]


def fmt_float(x) -> str:
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path, delimiter=","):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    return rows[0], [r for r in rows[1:] if r]


def _expect_header(path, header, expected):
    if [h.strip().lower() for h in header] != list(expected):
        raise ValueError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".labels")


def _write_labels(path, labels) -> None:
    atomic_write_text(sidecar_path(path), _csv_text(["label"], [[lab] for lab in labels]))


def _read_labels(path) -> list[str]:
    side = sidecar_path(path)
    header, rows = _read_csv(side)
    _expect_header(side, header, ["label"])
    return [r[0] for r in rows]


# -- trees ------------------------------------------------------------------


def tree_format_for(path) -> str:
    return "json" if str(path).lower().endswith(".json") else "newick"


def read_tree(path, fmt: str | None = None) -> PriorTree:
    text = Path(path).read_text(encoding="utf-8")
    return parse_tree(text, fmt or tree_format_for(path))


# -- embeddings -------------------------------------------------------------


def read_embeddings(path) -> LabeledPointSet:
    """Header row, then ``label, x1, x2, ...`` per line; ``.tsv`` is tab separated."""
    delim = "\t" if str(path).lower().endswith((".tsv", ".tab")) else ","
    header, rows = _read_csv(path, delim)
    labels, vecs = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            vecs.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        labels.append(row[0])
    if not labels:
        raise ValueError(f"{path}: no embedding rows")
    return LabeledPointSet.from_rows(labels, vecs)


def write_embeddings(path, points: LabeledPointSet) -> None:
    dim = points.vectors.shape[1]
    rows = [[lab, *map(fmt_float, vec)] for lab, vec in zip(points.labels, points.vectors)]
    atomic_write_text(path, _csv_text(["label", *(f"x{i}" for i in range(dim))], rows))


# -- distance matrices ------------------------------------------------------


def write_matrix(path, matrix: DistanceMatrix) -> None:
    n = matrix.n
    iu = np.triu_indices(n, 1)
    labels = matrix.labels
    rows = [[labels[i], labels[j], fmt_float(v)] for i, j, v in zip(iu[0], iu[1], matrix.values)]
    atomic_write_text(path, _csv_text(["label_a", "label_b", "value"], rows))
    _write_labels(path, labels)


def read_matrix(path) -> DistanceMatrix:
    """Read condensed triplets; every unordered pair must appear exactly once."""
    header, rows = _read_csv(path)
    _expect_header(path, header, ["label_a", "label_b", "value"])
    if sidecar_path(path).exists():
        labels = _read_labels(path)
    else:
        labels = list(dict.fromkeys(lab for r in rows for lab in r[:2]))
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    sq = np.full((n, n), np.nan)
    np.fill_diagonal(sq, 0.0)
    for lineno, r in enumerate(rows, start=2):
        if len(r) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields")
        a, b, v = r
        if a not in index or b not in index:
            raise ValueError(f"{path}:{lineno}: label not in the label order")
        i, j = index[a], index[b]
        if i == j:
            raise ValueError(f"{path}:{lineno}: self-pair {a!r}")
        if not np.isnan(sq[i, j]):
            raise ValueError(f"{path}:{lineno}: duplicate pair ({a!r}, {b!r})")
        sq[i, j] = sq[j, i] = float(v)
    if np.isnan(sq).any():
        i, j = np.argwhere(np.isnan(sq))[0]
        raise ValueError(f"{path}: missing pair ({labels[i]!r}, {labels[j]!r})")
    iu = np.triu_indices(n, 1)
    vals = sq[iu]
    return DistanceMatrix(labels, vals, normalized=bool(vals.size == 0 or vals.max() <= 1.0))


# -- dendrograms and partitions --------------------------------------------------


def write_dendrogram(path, dend: Dendrogram, newick_path=None) -> None:
    rows = [[m.left, m.right, fmt_float(m.height), m.size] for m in dend]
    atomic_write_text(path, _csv_text(["left", "right", "height", "size"], rows))
    _write_labels(path, dend.labels)
    if newick_path is not None:
        atomic_write_text(newick_path, dend.to_newick() + "\n")


def read_dendrogram(path) -> Dendrogram:
    header, rows = _read_csv(path)
    _expect_header(path, header, ["left", "right", "height", "size"])
    labels = _read_labels(path)
    merges = [(int(a), int(b), float(h), int(s)) for a, b, h, s in rows]
    return Dendrogram.from_merges(labels, merges)


def write_partition(path, partition: FlatPartition) -> None:
    rows = [[lab, c] for lab, c in zip(partition.labels, partition.assignment.tolist())]
    atomic_write_text(path, _csv_text(["label", "cluster"], rows))


def read_partition(path) -> FlatPartition:
    header, rows = _read_csv(path)
    _expect_header(path, header, ["label", "cluster"])
    mapping = {}
    for lineno, r in enumerate(rows, start=2):
        if r[0] in mapping:
            raise ValueError(f"{path}:{lineno}: label {r[0]!r} assigned twice")
        mapping[r[0]] = r[1]
    return FlatPartition.from_mapping(mapping)


# -- keyword records --------------------------------------------------------------


def read_records(path, labels=None) -> list[KeywordRecord]:
    """``keyword,item_label,purchase_count`` rows grouped by keyword.

    With ``labels`` given, an item outside that set is an error.
    """
    header, rows = _read_csv(path)
    _expect_header(path, header, ["keyword", "item_label", "purchase_count"])
    known = None if labels is None else set(labels)
    grouped: dict[str, list] = {}
    for lineno, r in enumerate(rows, start=2):
        if len(r) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields")
        kw, item, count = r
        if known is not None and item not in known:
            raise ValueError(f"{path}:{lineno}: unknown item label {item!r}")
        try:
            c = int(count)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: purchase count {count!r} is not an integer") from None
        grouped.setdefault(kw, []).append((item, c))
    return [KeywordRecord(kw, tuple(p)) for kw, p in grouped.items()]


def write_records(path, records) -> None:
    rows = [[rec.keyword, item, c] for rec in records for item, c in rec.purchases]
    atomic_write_text(path, _csv_text(["keyword", "item_label", "purchase_count"], rows))
