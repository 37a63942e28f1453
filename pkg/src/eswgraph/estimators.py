"""scikit-learn style wrappers around the functional pipelines.

All three take a hyperspectral cube shaped ``(nr, nc, nz)`` as ``X``.
Label images use 0 for unlabelled pixels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import EdgeWeights, WeightKind, build_grid_graph
from .gcn import build_normalized_laplacian, graph_convolve, spectral_cluster
from .gcn import GcnConfig, filter_scale, overall_accuracy
from .random_walk import RwConfig, Similarity, build_laplacian, rw_classify, similarity_weights
from .validation import check_cube, check_edge_weights, check_int, check_label_image
from .watershed import EswConfig, SeedSet, esw_edge_weights


class ESWEdgeWeights(TransformerMixin, BaseEstimator):
    """Ensemble stochastic watershed edge-weights of a cube's 4-adjacency graph.

    ``transform`` returns one dissimilarity in ``[0, 1]`` per edge in the
    canonical order of :func:`eswgraph.core.build_grid_graph`. The result is
    a deterministic function of ``X`` and the parameters, independent of
    ``n_jobs``.

    Parameters
    ----------
    n_repeats : int
        Number of stochastic watersheds in the ensemble.
    kappa_f, kappa_v : int or None
        Bands and seeds sampled per watershed; ``None`` picks
        ``ceil(sqrt(nz))`` and ``ceil(0.05 * n_pixels)``.
    random_state : int
        Master seed for the per-repetition generators.
    n_jobs : int or None
        Worker processes; ``None`` reads ``ESW_WORKERS`` (default 1).
    """

    def __init__(self, n_repeats=100, kappa_f=None, kappa_v=None, random_state=0, n_jobs=None):
        self.n_repeats = n_repeats
        self.kappa_f = kappa_f
        self.kappa_v = kappa_v
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _compute(self, X):
        cube = check_cube(X)
        check_int("n_repeats", self.n_repeats, 1)
        check_int("kappa_f", self.kappa_f, 1, allow_none=True)
        check_int("kappa_v", self.kappa_v, 2, allow_none=True)
        check_int("random_state", self.random_state, 0)
        graph = build_grid_graph(cube.nr, cube.nc)
        config = EswConfig(self.n_repeats, self.kappa_f, self.kappa_v, self.random_state)
        return cube, graph, esw_edge_weights(cube, graph, config, self.n_jobs)

    def fit(self, X, y=None):
        cube, self.graph_, self.weights_ = self._compute(X)
        self.config_ = self.weights_.config
        self.n_features_in_ = cube.nz
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        return self._compute(X)[2].values

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).weights_.values


class RandomWalkClassifier(ClassifierMixin, BaseEstimator):
    """Transductive random-walk classifier on the pixel grid.

    ``fit(X, y)`` takes a seed image ``y`` (0 = unlabelled) and labels every
    pixel; ``predict(X)`` returns that labelling for the same cube.

    ``edge_weights`` supplies ESW dissimilarities for ``similarity="esw"``;
    when omitted they are estimated with :class:`ESWEdgeWeights` defaults.
    """

    def __init__(self, similarity="esw", beta=None, epsilon=1e-6, cg_tol=1e-10,
                 cg_max_iter=None, edge_weights=None):
        self.similarity = similarity
        self.beta = beta
        self.epsilon = epsilon
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.edge_weights = edge_weights

    def fit(self, X, y):
        cube = check_cube(X)
        y = check_label_image(y, cube.n_pixels, "y")
        config = RwConfig(self.similarity, self.beta, self.epsilon, self.cg_tol, self.cg_max_iter)
        graph = build_grid_graph(cube.nr, cube.nc)

        esw = None
        if config.similarity is Similarity.ESW_COMPLEMENT:
            if self.edge_weights is None:
                esw = ESWEdgeWeights().fit(cube).weights_
            else:
                esw = check_edge_weights(self.edge_weights, graph)

        self.classes_ = np.unique(y[y != 0])
        if len(self.classes_) < 1:
            raise ValueError("y has no labelled pixels")
        index = np.searchsorted(self.classes_, y)
        seeds = SeedSet.from_label_array(np.where(y != 0, index + 1, 0))
        lap = build_laplacian(graph, similarity_weights(cube, graph, esw, config))
        labels, potentials = rw_classify(lap, seeds, len(self.classes_),
                                         config.cg_tol, config.cg_max_iter)
        self.shape_ = (cube.nr, cube.nc)
        self.n_features_in_ = cube.nz
        self.transduction_ = self.classes_[labels - 1].reshape(self.shape_)
        self.label_distributions_ = potentials.reshape(*self.shape_, -1)
        return self

    def predict(self, X):
        check_is_fitted(self, "transduction_")
        cube = check_cube(X)
        if (cube.nr, cube.nc) != self.shape_:
            raise ValueError(f"fitted on a {self.shape_} image, got {(cube.nr, cube.nc)}")
        return self.transduction_

    def predict_proba(self, X):
        self.predict(X)
        return self.label_distributions_

    def score(self, X, y, sample_weight=None):
        """Overall accuracy on the labelled pixels of ``y``."""
        pred = self.predict(X).ravel()
        y = check_label_image(y, pred.size, "y")
        mask = y != 0
        if not mask.any():
            raise ValueError("y has no labelled pixels")
        return float(np.mean(pred[mask] == y[mask]))


class WeightedGCNClustering(ClusterMixin, BaseEstimator):
    """Low-pass graph convolution of the cube followed by spectral clustering.

    With ``edge_weights=None`` every edge has weight 1 and the filter is
    ``I - L/2``; otherwise dissimilarities ``w`` become similarities
    ``exp(-beta w)`` and the filter is ``I - L/lambda_max``.
    """

    def __init__(self, n_clusters=8, n_steps=10, edge_weights=None, beta=1.0, knn_k=10,
                 kmeans_restarts=10, subsample=None, random_state=0):
        self.n_clusters = n_clusters
        self.n_steps = n_steps
        self.edge_weights = edge_weights
        self.beta = beta
        self.knn_k = knn_k
        self.kmeans_restarts = kmeans_restarts
        self.subsample = subsample
        self.random_state = random_state

    def fit(self, X, y=None):
        cube = check_cube(X)
        config = GcnConfig(max_steps=self.n_steps, n_clusters=self.n_clusters, knn_k=self.knn_k,
                           kmeans_restarts=self.kmeans_restarts, subsample=self.subsample,
                           master_seed=self.random_state, beta=self.beta)
        graph = build_grid_graph(cube.nr, cube.nc)
        weights = None
        if self.edge_weights is not None:
            weights = check_edge_weights(self.edge_weights, graph)
            if weights.kind is WeightKind.DISSIMILARITY:
                weights = EdgeWeights(np.exp(-self.beta * weights.values), WeightKind.SIMILARITY)
        L = build_normalized_laplacian(graph, weights)
        self.lambda_max_ = filter_scale(L, weights is not None, config)
        for features in graph_convolve(L, cube.pixels, self.lambda_max_, self.n_steps):
            pass
        result = spectral_cluster(features, self.n_clusters, self.knn_k, self.kmeans_restarts,
                                  self.random_state, self.subsample)
        self.features_ = features.reshape(cube.nr, cube.nc, -1)
        self.labels_ = result.labels.reshape(cube.nr, cube.nc)
        self.n_features_in_ = cube.nz
        return self

    def score(self, X, y):
        """Overall accuracy after optimal cluster-to-class matching."""
        check_is_fitted(self, "labels_")
        y = check_label_image(y, self.labels_.size, "y")
        return overall_accuracy(self.labels_.ravel(), y)
