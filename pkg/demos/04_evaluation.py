"""
Scoring substitution groups
===========================

Each search keyword leads to purchases spread over clusters. A good cluster
holds items people treat as substitutes, so a keyword's purchases should pile
up in one cluster: high purity, low entropy.
"""

from priorclust import FlatPartition, KeywordRecord, MetricReport, evaluate, normalize_report

groups = FlatPartition.from_mapping(
    {"cola": "soda", "lemonade": "soda", "tonic": "soda", "chips": "snack", "pretzels": "snack"}
)

records = [
    KeywordRecord("fizzy drink", (("cola", 3), ("lemonade", 1))),
    KeywordRecord("party", (("cola", 2), ("chips", 2))),
    KeywordRecord("salty", (("chips", 5), ("pretzels", 4), ("tonic", 1))),
]

report = evaluate(groups, records)
print(report)

# "party" splits evenly across two clusters, so its entropy is ln 2 and it
# pulls the unweighted mean up more than the weighted one.

# %%
# Comparing runs: purity is divided by the best value and entropies by the
# worst, so the winner reads 1.0 on purity and the loser 1.0 on entropy.
runs = {
    "task only": MetricReport(0.744, 2.5, 2.5, 120),
    "blended": MetricReport(0.800, 1.7, 1.8, 120),
    "prior only": MetricReport(0.768, 1.8, 2.0, 120),
}
for name, r in zip(runs, normalize_report(list(runs.values()))):
    print(f"{name:>10}: purity {r.purity:.2f}  entropy {r.entropy:.2f}  weighted {r.weighted_entropy:.2f}")
