"""Random-walk semi-supervised pixel classification on a weighted grid graph."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import UNLABELLED, EdgeWeights, GridGraph, HyperCube, WeightKind, edge_distances
from .errors import SolverError
from .watershed import SeedSet, repetition_rng

TIE_TOL = 1e-9


class Similarity(str, enum.Enum):
    EUCLIDEAN_EXP = "euclidean"
    COSINE = "cosine"
    ESW_COMPLEMENT = "esw"


@dataclass(frozen=True)
class RwConfig:
    """Random-walk parameters.

    ``beta=None`` picks 10 for ESW weights and ``1 / mean edge distance`` for
    the Euclidean kernel. ``cg_max_iter=None`` allows ``max(1000, 10 * n)``
    iterations for ``n`` unknowns.
    """

    similarity: Similarity = Similarity.ESW_COMPLEMENT
    beta: float | None = None
    epsilon: float = 1e-6
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "similarity", Similarity(self.similarity))
        if self.beta is not None and not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.epsilon <= 1e-3:
            raise ValueError(f"epsilon must be in (0, 1e-3], got {self.epsilon}")
        if not self.cg_tol > 0:
            raise ValueError(f"cg_tol must be positive, got {self.cg_tol}")


@dataclass(frozen=True)
class RunResult:
    method: str
    trial: int
    x: int
    oa: float
    wall_ms: float
    x_name: str = "seeds_per_class"


def similarity_weights(cube: HyperCube, graph: GridGraph, esw: EdgeWeights | None,
                       config: RwConfig) -> EdgeWeights:
    sim = config.similarity
    if sim is Similarity.EUCLIDEAN_EXP:
        dist = edge_distances(cube, graph)
        beta = config.beta
        if beta is None:
            mean = dist.mean() if len(dist) else 0.0
            beta = 1.0 / mean if mean > 0 else 1.0
        w = np.exp(-beta * dist)
    elif sim is Similarity.COSINE:
        px = cube.pixels
        a, b = px[graph.edges[:, 0]], px[graph.edges[:, 1]]
        norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        dots = np.einsum("ij,ij->i", a, b)
        w = np.zeros(graph.n_edges)
        ok = norms > 0
        w[ok] = np.clip(dots[ok] / norms[ok], 0.0, 1.0)
    else:
        if esw is None:
            raise ValueError("ESW weights are required for the ESW similarity")
        esw.check_graph(graph)
        beta = 10.0 if config.beta is None else config.beta
        w = np.exp(-beta * esw.values)
    return EdgeWeights(np.maximum(w, config.epsilon), WeightKind.SIMILARITY)


def build_laplacian(graph: GridGraph, weights: EdgeWeights) -> sparse.csr_matrix:
    """Combinatorial Laplacian ``D - W`` as a CSR matrix."""
    weights.check_graph(graph)
    if weights.kind is not WeightKind.SIMILARITY:
        raise ValueError("the Laplacian needs similarity weights")
    w = weights.values
    if np.any(w <= 0):
        raise ValueError("similarity weights must be strictly positive")
    n = graph.n_vertices
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    deg = np.bincount(u, w, minlength=n) + np.bincount(v, w, minlength=n)
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    data = np.concatenate([-w, -w, deg])
    lap = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    lap.sort_indices()
    return lap


def conjugate_gradient(A, B, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned CG on each column of ``B`` at once.

    Stops a column once ``||r|| <= tol * ||b||``; raises :class:`SolverError`
    if any column is still above tolerance after ``max_iter`` iterations.
    """
    B = np.asarray(B, dtype=np.float64)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    n, k = B.shape
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    inv_diag = 1.0 / A.diagonal()
    X = np.zeros_like(B)
    R = B.copy()
    Z = inv_diag[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    bnorm = np.linalg.norm(B, axis=0)
    target = tol * bnorm
    res = np.linalg.norm(R, axis=0)
    active = res > target
    it = 0
    while np.any(active):
        if it >= max_iter:
            raise SolverError(f"CG did not converge in {max_iter} iterations",
                              float(np.max(res[active] / bnorm[active])))
        cols = np.flatnonzero(active)
        Pa = P[:, cols]
        AP = A @ Pa
        alpha = rz[cols] / np.einsum("ij,ij->j", Pa, AP)
        X[:, cols] += alpha * Pa
        R[:, cols] -= alpha * AP
        Za = inv_diag[:, None] * R[:, cols]
        rz_new = np.einsum("ij,ij->j", R[:, cols], Za)
        P[:, cols] = Za + (rz_new / rz[cols]) * Pa
        rz[cols] = rz_new
        res[cols] = np.linalg.norm(R[:, cols], axis=0)
        active[cols] = res[cols] > target[cols]
        it += 1
    return X[:, 0] if squeeze else X


def rw_classify(laplacian, seeds: SeedSet, n_classes: int, cg_tol=1e-10, cg_max_iter=None):
    """Label every vertex with the class whose random-walk potential is largest.

    Returns ``(labels, potentials)`` with ``potentials[v, c - 1]`` the
    probability that a walk from ``v`` first reaches a seed of class ``c``.
    Equal potentials resolve to the smallest class id.
    """
    lap = sparse.csr_matrix(laplacian)
    n = lap.shape[0]
    if len(seeds) and seeds.vertices.max() >= n:
        raise ValueError("seed vertex out of range")
    if n_classes < 1 or np.any(seeds.labels > n_classes):
        raise ValueError(f"seed labels must lie in 1..{n_classes}")
    missing = np.setdiff1d(np.arange(1, n_classes + 1), seeds.labels)
    if len(missing):
        raise ValueError(f"classes without seeds: {missing.tolist()}")

    potentials = np.zeros((n, n_classes))
    potentials[seeds.vertices, seeds.labels - 1] = 1.0
    labels = seeds.to_label_array(n)
    unlabelled = np.setdiff1d(np.arange(n), seeds.vertices)
    if len(unlabelled) == 0:
        return labels, potentials

    L_uu = lap[unlabelled][:, unlabelled].tocsr()
    L_us = lap[unlabelled][:, seeds.vertices]
    indicator = np.zeros((len(seeds), n_classes))
    indicator[np.arange(len(seeds)), seeds.labels - 1] = 1.0
    rhs = -(L_us @ indicator)
    potentials[unlabelled] = conjugate_gradient(L_uu, rhs, cg_tol, cg_max_iter)

    pu = potentials[unlabelled]
    best = pu.max(axis=1, keepdims=True)
    labels[unlabelled] = np.argmax(pu >= best - TIE_TOL, axis=1) + 1
    return labels, potentials


def sample_seeds(gt, classes, seeds_per_class, rng) -> SeedSet:
    """Draw ``seeds_per_class`` pixels of each class; labels are 1-based class indices."""
    vertices, labels = [], []
    for k, c in enumerate(classes, start=1):
        pool = np.flatnonzero(gt == c)
        if len(pool) < seeds_per_class:
            raise ValueError(f"class {c} has {len(pool)} pixels, need {seeds_per_class}")
        vertices.append(rng.choice(pool, seeds_per_class, replace=False))
        labels.append(np.full(seeds_per_class, k))
    return SeedSet(np.concatenate(vertices), np.concatenate(labels))


def rw_experiment(cube: HyperCube, graph: GridGraph, gt, esw: EdgeWeights | None,
                  config: RwConfig, seeds_per_class: int, trials: int, master_seed: int = 0,
                  similarities=None) -> list[RunResult]:
    """Repeat random-walk classification over random seed draws.

    Every similarity in a trial sees the same seeds. Accuracy is measured on
    labelled pixels that were not used as seeds.
    """
    gt = np.asarray(gt, dtype=np.int64).ravel()
    if gt.shape != (graph.n_vertices,):
        raise ValueError("groundtruth length does not match the graph")
    if seeds_per_class < 1 or trials < 1:
        raise ValueError("seeds_per_class and trials must be >= 1")
    classes = np.unique(gt[gt != UNLABELLED])
    if len(classes) < 2:
        raise ValueError("need at least two labelled classes")
    if similarities is None:
        similarities = [Similarity.ESW_COMPLEMENT, Similarity.EUCLIDEAN_EXP, Similarity.COSINE]
        if esw is None:
            similarities = similarities[1:]
    similarities = [Similarity(s) for s in similarities]

    laplacians = {}
    for sim in similarities:
        cfg = RwConfig(sim, config.beta, config.epsilon, config.cg_tol, config.cg_max_iter)
        laplacians[sim] = build_laplacian(graph, similarity_weights(cube, graph, esw, cfg))

    class_of = np.concatenate([[UNLABELLED], classes])
    results = []
    for trial in range(trials):
        rng = repetition_rng(master_seed, trial, stream=2)
        seeds = sample_seeds(gt, classes, seeds_per_class, rng)
        evaluate = gt != UNLABELLED
        evaluate[seeds.vertices] = False
        if not evaluate.any():
            raise ValueError("no labelled pixels left for evaluation")
        for sim in similarities:
            start = time.perf_counter()
            labels, _ = rw_classify(laplacians[sim], seeds, len(classes),
                                    config.cg_tol, config.cg_max_iter)
            oa = float(np.mean(class_of[labels[evaluate]] == gt[evaluate]))
            wall = (time.perf_counter() - start) * 1e3
            results.append(RunResult(sim.value, trial, seeds_per_class, oa, wall))
    return results
