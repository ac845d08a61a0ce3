"""Command-line entry point: ``priorclust <subcommand> ...``.

Exit codes: 0 success, 2 input or validation error, 3 unattainable K,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats
from .evaluation import evaluate, normalize_report
from .linkage import LINKAGES, UnattainableK, attainable_ks, cut, linkage, permutation_invariance_check
from .metric import (
    DEFAULT_TOL,
    blend,
    cosine_dissimilarity_matrix,
    normalize,
    verify_metric_axioms,
    verify_ultrametric,
)
from .tree import TreeParseError, tree_to_ultrametric

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNATTAINABLE = 3
EXIT_INTERNAL = 4

DEFAULT_SEED = 0


class InternalError(RuntimeError):
    pass


def _read_order(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_encode_tree(args) -> int:
    tree = formats.read_tree(args.tree, args.format)
    order = _read_order(args.order) if args.order else None
    if args.extend_with:
        tree = tree.extended(_read_order(args.extend_with))
    u = tree_to_ultrametric(tree, order)
    if not verify_ultrametric(u, tol=0.0):
        raise InternalError("encoded tree distance is not ultrametric")
    formats.write_matrix(args.out, u)
    return EXIT_OK


def cmd_distances(args) -> int:
    d = cosine_dissimilarity_matrix(formats.read_embeddings(args.embeddings))
    if args.rescale:
        d = normalize(d)
    formats.write_matrix(args.out, d)
    return EXIT_OK


def cmd_cluster(args) -> int:
    d_p = formats.read_matrix(args.dp)
    if args.ut is not None:
        u_t = formats.read_matrix(args.ut)
        if set(u_t.labels) == set(d_p.labels) and u_t.labels != d_p.labels:
            u_t = u_t.reorder(d_p.labels)
        d = blend(d_p, u_t, args.alpha)
    elif args.alpha != 0.0:
        raise ValueError("--alpha > 0 needs a prior matrix (--ut)")
    else:
        d = d_p
    dend = linkage(d, args.linkage)
    newick = args.newick or Path(args.out).with_suffix(".nwk")
    formats.write_dendrogram(args.out, dend, newick)
    return EXIT_OK


def cmd_cut(args) -> int:
    dend = formats.read_dendrogram(args.dendrogram)
    try:
        part = cut(dend, args.K)
    except UnattainableK as exc:
        print(f"error: {exc}; attainable K: {attainable_ks(dend)}", file=sys.stderr)
        return EXIT_UNATTAINABLE
    formats.write_partition(args.out, part)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    parts = [formats.read_partition(p) for p in args.partition]
    raw = [evaluate(part, formats.read_records(args.records, part.labels)) for part in parts]
    rows = []
    for path, part, r, nr in zip(args.partition, parts, raw, normalize_report(raw)):
        rows.append(
            {
                "partition": str(path),
                "K": part.K,
                **r.as_dict(),
                "purity_normalized": nr.purity,
                "entropy_normalized": nr.entropy,
                "weighted_entropy_normalized": nr.weighted_entropy,
            }
        )
    if str(args.out).lower().endswith(".json"):
        text = json.dumps(rows if len(rows) > 1 else rows[0], indent=2) + "\n"
    else:
        keys = list(rows[0])
        lines = [",".join(keys)]
        for row in rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row.values()))
        text = "\n".join(lines) + "\n"
    formats.atomic_write_text(args.out, text)
    return EXIT_OK


def cmd_tune(args) -> int:
    from .tuner import run_config_file

    run_config_file(args.config, seed=args.seed)
    return EXIT_OK


def cmd_check(args) -> int:
    m = formats.read_matrix(args.matrix)
    axioms = verify_metric_axioms(m, args.tol)
    ultra = verify_ultrametric(m, args.tol)
    out = {
        "labels": m.n,
        "non_negative": axioms.non_negative,
        "triangle_inequality": axioms.triangle,
        "triangle_violations": axioms.n_violations,
        "triangle_witness": axioms.witness,
        "ultrametric": ultra.ok,
        "ultrametric_witness": ultra.witness,
    }
    if ultra.ok and not axioms.triangle:
        raise InternalError("ultrametric matrix failed the triangle inequality")
    for method in args.linkage or []:
        out[f"permutation_invariant_{method}"] = permutation_invariance_check(
            m, method, trials=args.trials, seed=args.seed if args.seed is not None else DEFAULT_SEED
        )
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        formats.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priorclust", description="Hierarchical clustering regularized by a prior tree."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode-tree", help="prior tree -> leaf-share ultrametric matrix")
    p.add_argument("tree")
    p.add_argument("--format", choices=["newick", "json"], help="default: from file extension")
    p.add_argument("--order", help="file with one label per line fixing the row order")
    p.add_argument("--extend-with", help="file of labels to attach under the root if missing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode_tree)

    p = sub.add_parser("distances", help="embeddings CSV -> cosine dissimilarity matrix")
    p.add_argument("embeddings")
    p.add_argument("--rescale", action="store_true", help="divide by the largest entry")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("cluster", help="blend matrices and build a dendrogram")
    p.add_argument("dp", help="task distance matrix")
    p.add_argument("--ut", help="prior ultrametric matrix")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--linkage", choices=LINKAGES, default="single")
    p.add_argument("--out", required=True, help="merge-table CSV")
    p.add_argument("--newick", help="tree text output (default: OUT with .nwk suffix)")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("cut", help="dendrogram -> flat partition with K clusters")
    p.add_argument("dendrogram")
    p.add_argument("K", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("evaluate", help="purity / entropy of partitions against keyword records")
    p.add_argument("--partition", action="append", required=True, help="repeatable")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help=".json or .csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="run the full grid-search pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="overrides [partition] seed (default 0)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("check", help="metric / ultrametric / permutation diagnostics on a matrix")
    p.add_argument("matrix")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--linkage", action="append", choices=LINKAGES)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except TreeParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
