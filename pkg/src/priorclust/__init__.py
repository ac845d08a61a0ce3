"""Hierarchical clustering regularized by a prior ontology tree."""
from .evaluation import KeywordRecord, MetricReport, entropy, evaluate, normalize_report, purity, weighted_entropy
from .linkage import (
    Dendrogram,
    FlatPartition,
    UnattainableK,
    attainable_ks,
    average_linkage,
    complete_linkage,
    cophenetic,
    cut,
    linkage,
    permutation_invariance_check,
    single_linkage,
)
from .metric import (
    DistanceMatrix,
    LabeledPointSet,
    blend,
    cosine_dissimilarity_matrix,
    linf_distance,
    normalize,
    verify_metric_axioms,
    verify_ultrametric,
)
from .tree import (
    PriorTree,
    TreeParseError,
    lca,
    parse_tree,
    tree_to_ultrametric,
    ultrametric_distance,
    ultrametric_fraction,
)
from .tuner import (
    GridSpec,
    PipelineConfig,
    choose_alpha,
    combine_dendrograms,
    grid_search,
    pre_partition,
    run_pipeline,
)

__version__ = "0.1.0"
