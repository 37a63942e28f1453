"""Parameter-free graph convolution followed by spectral clustering.

Features are smoothed with ``X <- (I - L / lambda_max) X`` where ``L`` is
the symmetric normalised Laplacian of the (weighted) pixel graph. After
each step the pixels are spectrally clustered and scored against the
groundtruth through an optimal cluster-to-class matching.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.spatial import cKDTree

from .core import UNLABELLED, EdgeWeights, GridGraph, HyperCube, WeightKind

LAMBDA_SAFETY = 1.01
DENSE_EIG_LIMIT = 512
DENSE_EIG_FALLBACK = 6000


class ClusterDegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GcnConfig:
    """Experiment settings; ``n_clusters=None`` uses the number of groundtruth classes.

    ``beta`` converts dissimilarity weights to similarities ``exp(-beta w)``.
    Large values make vertex degrees very uneven, and the filter then pulls
    features towards ``sqrt(degree)`` instead of smoothing them.
    """

    max_steps: int = 200
    repeats: int = 10
    n_clusters: int | None = None
    knn_k: int = 10
    kmeans_restarts: int = 10
    subsample: int | None = None
    master_seed: int = 0
    beta: float = 1.0
    lambda_tol: float = 1e-4
    lambda_max_iter: int = 100_000

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.n_clusters is not None and self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")
        if self.subsample is not None and self.subsample < 2:
            raise ValueError("subsample must be >= 2")


def build_normalized_laplacian(graph: GridGraph, weights: EdgeWeights | None = None):
    """``I - D^-1/2 W D^-1/2``; ``weights=None`` means every edge has weight 1."""
    n = graph.n_vertices
    if weights is None:
        w = np.ones(graph.n_edges)
    else:
        weights.check_graph(graph)
        if weights.kind is not WeightKind.SIMILARITY:
            raise ValueError("the normalised Laplacian needs similarity weights")
        w = weights.values
        if np.any(w <= 0):
            raise ValueError("similarity weights must be strictly positive")
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    deg = np.bincount(u, w, minlength=n) + np.bincount(v, w, minlength=n)
    isolated = np.flatnonzero(deg <= 0)
    if len(isolated):
        raise ValueError(f"vertex {int(isolated[0])} has zero degree")
    scale = 1.0 / np.sqrt(deg)
    off = -w * scale[u] * scale[v]
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    data = np.concatenate([off, off, np.ones(n)])
    lap = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    lap.sort_indices()
    return lap


class LambdaEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def estimate_lambda_max(L, tol=1e-6, max_iter=100_000, seed=0) -> LambdaEstimate:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Iterates until the eigen-residual ``||L v - rho v||`` drops below ``tol``.
    The Rayleigh quotient never exceeds the true maximum. On hitting
    ``max_iter`` the current estimate is returned with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = L.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for it in range(1, max_iter + 1):
        w = L @ v
        rho = float(v @ w)
        if np.linalg.norm(w - rho * v) <= tol:
            return LambdaEstimate(rho, True, it)
        norm = np.linalg.norm(w)
        if norm == 0:
            return LambdaEstimate(0.0, True, it)
        v = w / norm
    return LambdaEstimate(rho, False, max_iter)


def graph_convolve(L, X, lambda_max: float, steps: int):
    """Yield ``X(1), ..., X(steps)`` of the low-pass filter ``I - L / lambda_max``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != L.shape[0]:
        raise ValueError(f"features have {X.shape[0]} rows, Laplacian has {L.shape[0]}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    for _ in range(steps):
        X = X - (L @ X) / lambda_max
        yield X


def kmeans(Y, n_clusters, restarts=10, seed=0, max_iter=300):
    """Lloyd's k-means with farthest-point seeding; returns 0-based labels.

    Each restart draws only its first centre at random; the rest are the
    points farthest from the centres chosen so far.
    """
    Y = np.asarray(Y, dtype=np.float64)
    n = len(Y)
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        chosen = [int(rng.integers(n))]
        mind = np.sum((Y - Y[chosen[0]]) ** 2, axis=1)
        for _ in range(1, n_clusters):
            nxt = int(np.argmax(mind))
            chosen.append(nxt)
            mind = np.minimum(mind, np.sum((Y - Y[nxt]) ** 2, axis=1))
        centers = Y[chosen].copy()
        labels = None
        for _ in range(max_iter):
            d2 = ((Y[:, None, :] - centers[None]) ** 2).sum(-1)
            new = np.argmin(d2, axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for k in range(n_clusters):
                members = labels == k
                if members.any():
                    centers[k] = Y[members].mean(axis=0)
        inertia = float(np.sum((Y - centers[labels]) ** 2))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


class Clustering(NamedTuple):
    labels: np.ndarray
    degenerate: bool


def _top_eigenvectors(M, U, k):
    """Largest ``k`` eigenvectors of ``M`` orthogonal to the orthonormal columns of ``U``."""
    n = M.shape[0]
    if n < DENSE_EIG_LIMIT:
        _, vecs = np.linalg.eigh(M.toarray() - 2.0 * U @ U.T)
        return vecs[:, -k:]
    op = LinearOperator((n, n), matvec=lambda x: M @ x - 2.0 * U @ (U.T @ x), dtype=np.float64)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        _, vecs = eigsh(op, k=k, which="LA", tol=1e-8, v0=v0, ncv=min(n, max(2 * k + 1, 40)))
    except ArpackNoConvergence:
        if n > DENSE_EIG_FALLBACK:
            raise
        _, vecs = np.linalg.eigh(M.toarray() - 2.0 * U @ U.T)
        vecs = vecs[:, -k:]
    return vecs


def _spectral_embedding(X, n_clusters, knn_k):
    n = len(X)
    k = min(knn_k, n - 1)
    dist, idx = cKDTree(X).query(X, k + 1)
    rows = np.repeat(np.arange(n), k + 1)
    cols, dist = idx.ravel(), dist.ravel()
    keep = rows != cols
    rows, cols, dist = rows[keep], cols[keep], dist[keep]
    bandwidth = np.median(dist)
    if bandwidth <= 0:
        bandwidth = 1.0
    aff = np.maximum(np.exp(-0.5 * (dist / bandwidth) ** 2), 1e-12)
    A = sparse.coo_matrix((aff, (rows, cols)), shape=(n, n)).tocsr()
    A = A.maximum(A.T)
    deg = np.asarray(A.sum(axis=1)).ravel()
    scale = sparse.diags(1.0 / np.sqrt(deg))
    M = (scale @ A @ scale).tocsr()

    # each connected component contributes an exact eigenvector sqrt(deg) * 1_comp
    # with eigenvalue 1; iterative solvers resolve such repeated eigenvalues
    # poorly, so they are set explicitly and deflated out of M
    n_comp, comp = connected_components(A, directed=False)
    U = np.zeros((n, n_comp))
    U[np.arange(n), comp] = np.sqrt(deg)
    U /= np.linalg.norm(U, axis=0)
    if n_comp >= n_clusters:
        emb = U
    else:
        emb = np.hstack([U, _top_eigenvectors(M, U, n_clusters - n_comp)])
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)


def spectral_cluster(X, n_clusters, knn_k=10, kmeans_restarts=10, seed=0,
                     subsample=None) -> Clustering:
    """Normalised spectral clustering of the rows of ``X`` into labels ``1..n_clusters``.

    With ``subsample`` set, only that many rows are clustered and the rest
    take the label of their nearest clustered row.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n_clusters < 2:
        raise ValueError("n_clusters must be >= 2")
    if n < n_clusters:
        raise ValueError(f"{n} points cannot form {n_clusters} clusters")
    rng = np.random.default_rng(seed)
    if subsample is not None and n > max(subsample, n_clusters):
        picked = np.sort(rng.choice(n, max(subsample, n_clusters), replace=False))
    else:
        picked = None
    Xc = X if picked is None else X[picked]

    distinct, inverse = np.unique(Xc, axis=0, return_inverse=True)
    if len(distinct) < n_clusters:
        # too few distinct points: each one is its own cluster
        labels = inverse.ravel() + 1
    else:
        emb = _spectral_embedding(Xc, n_clusters, knn_k)
        labels = kmeans(emb, n_clusters, kmeans_restarts, seed=rng.integers(2**63)) + 1
    if picked is not None:
        _, nearest = cKDTree(Xc).query(X, 1)
        labels = labels[nearest]

    degenerate = len(np.unique(labels)) < n_clusters
    if degenerate:
        warnings.warn(f"only {len(np.unique(labels))} of {n_clusters} clusters are non-empty",
                      ClusterDegeneracyWarning, stacklevel=2)
    return Clustering(labels.astype(np.int64), degenerate)


def hungarian_match(confusion) -> np.ndarray:
    """Assign rows (clusters) to columns (classes) maximising the matched total.

    Returns the column index per row, ``-1`` for rows left unmatched when
    there are more rows than columns. Among optimal assignments the
    lexicographically smallest one is returned.
    """
    C = np.asarray(confusion)
    if C.ndim != 2 or C.size == 0:
        raise ValueError("confusion matrix must be a non-empty 2-D array")
    if np.any(C < 0):
        raise ValueError("confusion counts must be non-negative")
    nr, nc = C.shape
    size = max(nr, nc)
    P = np.zeros((size, size), dtype=np.int64 if np.issubdtype(C.dtype, np.integer) else float)
    P[:nr, :nc] = C

    def best(rows, cols):
        if not rows:
            return 0
        sub = P[np.ix_(rows, cols)]
        r, c = linear_sum_assignment(sub, maximize=True)
        return sub[r, c].sum()

    target = best(list(range(size)), list(range(size)))
    assignment = np.empty(size, dtype=np.int64)
    free = list(range(size))
    fixed = 0
    for i in range(size):
        rest = list(range(i + 1, size))
        for j in free:
            others = [c for c in free if c != j]
            if fixed + P[i, j] + best(rest, others) == target:
                assignment[i] = j
                fixed += P[i, j]
                free.remove(j)
                break
    out = assignment[:nr]
    out[out >= nc] = -1
    return out


def confusion_matrix(pred, gt):
    """Counts over labelled pixels; returns ``(matrix, cluster_ids, class_ids)``."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise ValueError("prediction and groundtruth differ in length")
    mask = gt != UNLABELLED
    if not mask.any():
        raise ValueError("groundtruth has no labelled pixels")
    clusters, ci = np.unique(pred[mask], return_inverse=True)
    classes, gi = np.unique(gt[mask], return_inverse=True)
    counts = np.zeros((len(clusters), len(classes)), dtype=np.int64)
    np.add.at(counts, (ci, gi), 1)
    return counts, clusters, classes


def match_clusters(pred, gt) -> dict:
    """Optimal ``{cluster id: class id}`` mapping over labelled pixels."""
    counts, clusters, classes = confusion_matrix(pred, gt)
    cols = hungarian_match(counts)
    return {int(c): int(classes[j]) for c, j in zip(clusters, cols) if j >= 0}


def overall_accuracy(pred, gt, assignment=None) -> float:
    """Fraction of labelled pixels whose mapped cluster equals the groundtruth class."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise ValueError("prediction and groundtruth differ in length")
    mask = gt != UNLABELLED
    if not mask.any():
        raise ValueError("groundtruth has no labelled pixels")
    if assignment is None:
        assignment = match_clusters(pred, gt)
    mapped = np.fromiter((assignment.get(int(p), UNLABELLED) for p in pred[mask]),
                         dtype=np.int64, count=int(mask.sum()))
    return float(np.mean(mapped == gt[mask]))


@dataclass
class GcnCurves:
    """``oa[r, k]`` is the accuracy of repeat ``r`` after step ``k + 1``."""

    oa: np.ndarray

    @property
    def best(self) -> np.ndarray:
        return np.maximum.accumulate(self.oa, axis=1)

    @property
    def mean_best(self) -> np.ndarray:
        return self.best.mean(axis=0)


def filter_scale(L, weighted, config: GcnConfig) -> float:
    if not weighted:
        return 2.0
    est = estimate_lambda_max(L, config.lambda_tol, config.lambda_max_iter)
    if not est.converged:
        warnings.warn(f"lambda_max power iteration stopped at {est.iterations} iterations",
                      RuntimeWarning, stacklevel=2)
    return est.value * LAMBDA_SAFETY


def gcn_experiment(cube: HyperCube, graph: GridGraph, gt, weights: EdgeWeights | None,
                   config: GcnConfig) -> GcnCurves:
    """Convolve, cluster and score after every step, ``repeats`` times.

    Dissimilarity weights (ESW) are turned into similarities ``exp(-beta w)``.
    Clustering randomness is re-seeded per (repeat, step).
    """
    gt = np.asarray(gt, dtype=np.int64).ravel()
    if gt.shape != (graph.n_vertices,):
        raise ValueError("groundtruth length does not match the graph")
    n_classes = len(np.unique(gt[gt != UNLABELLED]))
    n_clusters = config.n_clusters or n_classes
    if weights is not None and weights.kind is WeightKind.DISSIMILARITY:
        weights = EdgeWeights(np.exp(-config.beta * weights.values), WeightKind.SIMILARITY)
    L = build_normalized_laplacian(graph, weights)
    lam = filter_scale(L, weights is not None, config)

    oa = np.zeros((config.repeats, config.max_steps))
    for k, Xk in enumerate(graph_convolve(L, cube.pixels, lam, config.max_steps)):
        for r in range(config.repeats):
            ss = np.random.SeedSequence(config.master_seed, spawn_key=(3, r, k))
            seed = int(ss.generate_state(1, np.uint64)[0])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ClusterDegeneracyWarning)
                labels = spectral_cluster(Xk, n_clusters, config.knn_k, config.kmeans_restarts,
                                          seed, config.subsample).labels
            oa[r, k] = overall_accuracy(labels, gt)
    return GcnCurves(oa)
