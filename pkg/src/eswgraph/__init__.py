"""Ensemble stochastic watershed edge-weights for hyperspectral pixel graphs."""

from .core import (
    UNLABELLED,
    EdgeWeights,
    GridGraph,
    HyperCube,
    UnionFind,
    WeightKind,
    build_grid_graph,
    edge_distances,
    subset_distance,
)
from .errors import FormatError, SolverError
from .estimators import ESWEdgeWeights, RandomWalkClassifier, WeightedGCNClustering
from .gcn import (
    GcnConfig,
    build_normalized_laplacian,
    estimate_lambda_max,
    gcn_experiment,
    graph_convolve,
    hungarian_match,
    overall_accuracy,
    spectral_cluster,
)
from .random_walk import (
    RunResult,
    RwConfig,
    Similarity,
    build_laplacian,
    rw_classify,
    rw_experiment,
    similarity_weights,
)
from .watershed import (
    EswConfig,
    EswEdgeWeights,
    SeedSet,
    esw_edge_weights,
    seeded_watershed,
    subset_distance_histogram,
)

__version__ = "0.1.0"

__all__ = [
    "UNLABELLED",
    "EdgeWeights",
    "ESWEdgeWeights",
    "EswConfig",
    "EswEdgeWeights",
    "FormatError",
    "GcnConfig",
    "GridGraph",
    "HyperCube",
    "RandomWalkClassifier",
    "RunResult",
    "RwConfig",
    "SeedSet",
    "Similarity",
    "SolverError",
    "UnionFind",
    "WeightKind",
    "WeightedGCNClustering",
    "build_grid_graph",
    "build_laplacian",
    "build_normalized_laplacian",
    "edge_distances",
    "esw_edge_weights",
    "estimate_lambda_max",
    "gcn_experiment",
    "graph_convolve",
    "hungarian_match",
    "overall_accuracy",
    "rw_classify",
    "rw_experiment",
    "seeded_watershed",
    "similarity_weights",
    "spectral_cluster",
    "subset_distance",
    "subset_distance_histogram",
]
