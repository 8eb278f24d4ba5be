"""Discriminative submodular cover discovery and (smoothed) latent SVM
training for weakly labeled bags of feature vectors."""

__version__ = "0.1.0"

from .cover import (
    ConcaveFn,
    ConcaveKind,
    CoverConfig,
    CoverResult,
    approx_bound,
    brute_force_cover,
    cover_score,
    extract_positives,
    greedy_cover,
    negative_mine,
    total_cover,
)
from .data import (
    Bag,
    Dataset,
    FoldSplit,
    Instance,
    feature_means,
    kfold_split,
    load_dataset,
    save_dataset,
    split_dataset,
    standardize,
    synth_generate,
    synth_generate_confounded,
)
from .errors import DataError, NumericalError, ParseError, UsageError
from .evaluate import CvCell, CvReport, bag_accuracy, cross_validate
from .graph import BipartiteGraph, NeighborEntry, NeighborList, build_graph, nearest_per_bag
from .losses import LossKind, effective_loss, loss_grad, loss_value
from .lsvm import (
    Model,
    TrainConfig,
    decision,
    load_model,
    lsvm_objective,
    save_model,
    train_initial_svm,
    train_lsvm_cccp,
)
from .optim import OptConfig, OptReport, Termination, minimize
from .slsvm import (
    Omega,
    SmoothConfig,
    SmoothedMaxResult,
    TrainReport,
    project_simplex,
    project_simplex_pivot,
    slsvm_objective_grad,
    smoothed_max,
    top_n_scores,
    train_slsvm,
)

__all__ = [
    "__version__",
    "Bag", "Dataset", "FoldSplit", "Instance",
    "feature_means", "kfold_split", "load_dataset", "save_dataset",
    "split_dataset", "standardize", "synth_generate", "synth_generate_confounded",
    "BipartiteGraph", "NeighborEntry", "NeighborList", "build_graph", "nearest_per_bag",
    "ConcaveFn", "ConcaveKind", "CoverConfig", "CoverResult",
    "approx_bound", "brute_force_cover", "cover_score", "extract_positives",
    "greedy_cover", "negative_mine", "total_cover",
    "LossKind", "effective_loss", "loss_grad", "loss_value",
    "Model", "TrainConfig", "decision", "load_model", "lsvm_objective",
    "save_model", "train_initial_svm", "train_lsvm_cccp",
    "OptConfig", "OptReport", "Termination", "minimize",
    "Omega", "SmoothConfig", "SmoothedMaxResult", "TrainReport",
    "project_simplex", "project_simplex_pivot", "slsvm_objective_grad",
    "smoothed_max", "top_n_scores", "train_slsvm",
    "CvCell", "CvReport", "bag_accuracy", "cross_validate",
    "DataError", "NumericalError", "ParseError", "UsageError",
]
