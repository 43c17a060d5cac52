"""Bayesian additive regression trees for spectral classification.

A sum-of-trees sampler (regression, binary probit, stacked multinomial
probit) with split-usage and sparse-prior variable selection, tree-derived
variable-interaction networks, and a CLI pipeline for hyperspectral
classification tasks.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateLabelsError,
    InsufficientDataError,
    NirbartError,
    NumericError,
    StructuralError,
)
from .interaction import (
    InteractionMatrix,
    InteractionNetwork,
    build_network,
    co_occurrence,
    export_network,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    binary_metrics,
    confusion,
    log_loss,
    multiclass_report,
)
from .preprocess import (
    PcaModel,
    SplitPlan,
    aggregate_classes,
    fit_pca,
    smote,
    snv,
    stratified_split,
    transform_pca,
)
from .sampler import (
    BartConfig,
    BinaryProbitDraws,
    ClassifierDraws,
    ClassProbs,
    RegressionDraws,
    fit_multinomial,
    fit_probit_binary,
    fit_regression,
    predict_class_probs,
    predict_labels,
)
from .selection import (
    SparseSummary,
    UsageSummary,
    dirichlet_update,
    select_top,
    sparse_selection,
    theta_update,
    usage_frequencies,
)
from .trees import (
    SENTINEL_LEAF,
    CutpointGrid,
    Ensemble,
    Tree,
    TreeNode,
    build_cutpoint_grid,
    evaluate_ensemble,
    evaluate_tree,
    parse_tree,
    serialize_tree,
)
from .tuning import Grid, TuneResult, cross_validate, grid_search

__version__ = "0.1.0"

__all__ = [
    "BartConfig",
    "BinaryProbitDraws",
    "ClassifierDraws",
    "ClassProbs",
    "ConfigError",
    "ConfusionMatrix",
    "CutpointGrid",
    "DataError",
    "DegenerateLabelsError",
    "Ensemble",
    "EvalReport",
    "Grid",
    "InsufficientDataError",
    "InteractionMatrix",
    "InteractionNetwork",
    "NirbartError",
    "NumericError",
    "PcaModel",
    "RegressionDraws",
    "SENTINEL_LEAF",
    "SparseSummary",
    "SplitPlan",
    "StructuralError",
    "Tree",
    "TreeNode",
    "TuneResult",
    "UsageSummary",
    "aggregate_classes",
    "binary_metrics",
    "build_cutpoint_grid",
    "build_network",
    "co_occurrence",
    "confusion",
    "cross_validate",
    "dirichlet_update",
    "evaluate_ensemble",
    "evaluate_tree",
    "export_network",
    "fit_multinomial",
    "fit_pca",
    "fit_probit_binary",
    "fit_regression",
    "grid_search",
    "log_loss",
    "multiclass_report",
    "parse_tree",
    "predict_class_probs",
    "predict_labels",
    "select_top",
    "serialize_tree",
    "smote",
    "snv",
    "sparse_selection",
    "stratified_split",
    "theta_update",
    "transform_pca",
    "usage_frequencies",
]
