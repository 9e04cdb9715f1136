"""callout: outlier detection that also calls each outlier's type.

Given points (or just their pairwise distances), produce four outlier
rankings from one metric-tree index: an overall ranking plus rankings by
global, local, and collective outlierness. Ships the annotated-outlier
dataset generators and the evaluation helpers used to validate them.
"""

__version__ = "0.1.0"

from .dataset import (
    MetricDataset,
    euclidean_distance,
    load_dataset,
    manhattan_distance,
    register_metric,
)
from .datagen import (
    AnnotatedDataset,
    GmmModel,
    SyntheticConfig,
    fit_gmm_vei,
    generate_realistic,
    generate_synthetic,
    gmm_density,
    save_annotated_csv,
)
from .errors import (
    CalloutError,
    InfeasibleConfigError,
    InputError,
    InternalError,
    MetricError,
)
from .metrics import (
    auc_pr,
    auc_roc,
    brute_force_exact_nn,
    evaluate_rankings,
    verify_tree,
)
from .ranking import (
    CalloutResult,
    OutlierRankings,
    RadiiProfile,
    ScoreTable,
    c_allout,
    collective_scores,
    compute_score_table,
    global_scores,
    knee_radius,
    kneedle,
    local_ranking,
    overall_scores,
    rank_from_scores,
    refine,
)
from .tree import (
    Entry,
    SlimTree,
    TreeNode,
    approx_nearest_neighbor,
    build_tree,
    closest_root_object,
    dump_tree,
    foreign_representative,
    insert_object,
    leaf_representative,
    normalized_leaf_radius,
    normalized_nn_distance,
    root_objects,
    split_node,
)

__all__ = [
    "AnnotatedDataset",
    "CalloutError",
    "CalloutResult",
    "Entry",
    "GmmModel",
    "InfeasibleConfigError",
    "InputError",
    "InternalError",
    "MetricDataset",
    "MetricError",
    "OutlierRankings",
    "RadiiProfile",
    "ScoreTable",
    "SlimTree",
    "SyntheticConfig",
    "TreeNode",
    "approx_nearest_neighbor",
    "auc_pr",
    "auc_roc",
    "brute_force_exact_nn",
    "build_tree",
    "c_allout",
    "closest_root_object",
    "collective_scores",
    "compute_score_table",
    "dump_tree",
    "euclidean_distance",
    "evaluate_rankings",
    "fit_gmm_vei",
    "foreign_representative",
    "generate_realistic",
    "generate_synthetic",
    "global_scores",
    "gmm_density",
    "insert_object",
    "knee_radius",
    "kneedle",
    "leaf_representative",
    "load_dataset",
    "local_ranking",
    "manhattan_distance",
    "normalized_leaf_radius",
    "normalized_nn_distance",
    "overall_scores",
    "rank_from_scores",
    "refine",
    "register_metric",
    "root_objects",
    "split_node",
    "verify_tree",
]
