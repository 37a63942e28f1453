"""Seeded watershed propagation and ensemble stochastic watershed edge-weights."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    UNLABELLED,
    EdgeWeights,
    GridGraph,
    HyperCube,
    UnionFind,
    WeightKind,
    edge_distances,
)


@dataclass(frozen=True)
class SeedSet:
    vertices: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.int64).ravel()
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if len(vertices) != len(labels):
            raise ValueError("seed vertices and labels differ in length")
        if len(np.unique(vertices)) != len(vertices):
            raise ValueError("duplicate seed vertices")
        if np.any(labels < 1):
            raise ValueError("seed labels must be >= 1")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.vertices)

    @classmethod
    def from_label_array(cls, labels):
        labels = np.asarray(labels).ravel()
        (vertices,) = np.nonzero(labels != UNLABELLED)
        return cls(vertices, labels[vertices])

    def to_label_array(self, n):
        out = np.zeros(n, dtype=np.int64)
        out[self.vertices] = self.labels
        return out


@dataclass(frozen=True)
class EswConfig:
    """Ensemble size and sampling sizes.

    ``kappa_f`` and ``kappa_v`` left as ``None`` resolve to ``ceil(sqrt(nz))``
    bands and ``ceil(0.05 * n_pixels)`` seeds (at least 2).
    """

    n_repeats: int = 100
    kappa_f: int | None = None
    kappa_v: int | None = None
    master_seed: int = 0

    def resolve(self, nz: int, n_vertices: int) -> "EswConfig":
        kappa_f = self.kappa_f if self.kappa_f is not None else math.ceil(math.sqrt(nz))
        if self.kappa_v is not None:
            kappa_v = self.kappa_v
        else:
            kappa_v = min(max(math.ceil(0.05 * n_vertices), 2), n_vertices)
        cfg = EswConfig(int(self.n_repeats), int(kappa_f), int(kappa_v), int(self.master_seed))
        cfg.validate(nz, n_vertices)
        return cfg

    def validate(self, nz: int, n_vertices: int):
        if self.n_repeats < 1:
            raise ValueError(f"n_repeats must be >= 1, got {self.n_repeats}")
        if self.kappa_f is None or not 1 <= self.kappa_f <= nz:
            raise ValueError(f"kappa_f must be in [1, {nz}], got {self.kappa_f}")
        if self.kappa_v is None or not 2 <= self.kappa_v <= n_vertices:
            raise ValueError(f"kappa_v must be in [2, {n_vertices}], got {self.kappa_v}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class EswEdgeWeights(EdgeWeights):
    config: EswConfig | None = field(default=None, compare=False)


def seeded_watershed(graph: GridGraph, edge_dist, seeds: SeedSet) -> np.ndarray:
    """Propagate seed labels along edges in increasing dissimilarity order.

    Two components are merged unless both already carry a label; the merged
    component keeps whichever label it has. Ties in ``edge_dist`` are broken
    by edge index. Vertices with no path to a seed stay ``UNLABELLED``.
    """
    edge_dist = np.asarray(edge_dist, dtype=np.float64)
    if edge_dist.shape != (graph.n_edges,):
        raise ValueError(f"expected {graph.n_edges} edge distances, got {edge_dist.shape}")
    if len(seeds) == 0:
        raise ValueError("seed set is empty")
    n = graph.n_vertices
    if seeds.vertices.max() >= n or seeds.vertices.min() < 0:
        raise ValueError("seed vertex out of range")

    uf = UnionFind(n)
    for v, lab in zip(seeds.vertices.tolist(), seeds.labels.tolist()):
        uf.label[v] = lab

    find, union, label = uf.find, uf.union, uf.label
    order = np.argsort(edge_dist, kind="stable")
    us = graph.edges[order, 0].tolist()
    vs = graph.edges[order, 1].tolist()
    for u, v in zip(us, vs):
        ru, rv = find(u), find(v)
        if ru == rv or (label[ru] != UNLABELLED and label[rv] != UNLABELLED):
            continue
        union(ru, rv)

    return np.fromiter((label[find(v)] for v in range(n)), dtype=np.int64, count=n)


def repetition_rng(master_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one ensemble member; order of use is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stream, index)))


def _cut_counts(cube, graph, config, indices):
    counts = np.zeros(graph.n_edges, dtype=np.int64)
    eu, ev = graph.edges[:, 0], graph.edges[:, 1]
    for i in indices:
        rng = repetition_rng(config.master_seed, i)
        bands = np.sort(rng.choice(cube.nz, config.kappa_f, replace=False))
        seeds = rng.choice(graph.n_vertices, config.kappa_v, replace=False)
        seed_set = SeedSet(seeds, np.arange(1, config.kappa_v + 1))
        labels = seeded_watershed(graph, edge_distances(cube, graph, bands), seed_set)
        counts += labels[eu] != labels[ev]
    return counts


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("ESW_WORKERS", "1"))
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def esw_edge_weights(cube: HyperCube, graph: GridGraph, config: EswConfig | None = None,
                     workers=None) -> EswEdgeWeights:
    """Fraction of stochastic watershed runs in which each edge separates two labels.

    Every repetition draws its bands and seeds from its own generator, so the
    result does not depend on ``workers``.
    """
    if (cube.nr, cube.nc) != (graph.nr, graph.nc):
        raise ValueError("cube and graph dimensions differ")
    config = (config or EswConfig()).resolve(cube.nz, graph.n_vertices)
    workers = resolve_workers(workers)

    reps = range(config.n_repeats)
    if workers == 1 or config.n_repeats == 1:
        counts = _cut_counts(cube, graph, config, reps)
    else:
        chunks = [reps[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_cut_counts, [cube] * workers, [graph] * workers,
                             [config] * workers, chunks)
            counts = sum(parts, np.zeros(graph.n_edges, dtype=np.int64))
    return EswEdgeWeights(counts / config.n_repeats, WeightKind.DISSIMILARITY, config)


@dataclass(frozen=True)
class SubsetDistanceSamples:
    """Subset distances of same-class and different-class edges, pooled over draws."""

    same: np.ndarray
    different: np.ndarray

    def histogram(self, bins=20):
        hi = max(self.same.max(initial=0.0), self.different.max(initial=0.0))
        edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
        same, _ = np.histogram(self.same, edges)
        diff, _ = np.histogram(self.different, edges)
        return edges, same, diff


def subset_distance_histogram(cube: HyperCube, graph: GridGraph, gt,
                              config: EswConfig | None = None) -> SubsetDistanceSamples:
    """Collect subset distances for every labelled edge over ``n_repeats`` band draws."""
    gt = np.asarray(gt).ravel()
    if gt.shape != (graph.n_vertices,):
        raise ValueError("groundtruth length does not match the graph")
    classes = np.unique(gt[gt != UNLABELLED])
    if len(classes) < 2:
        raise ValueError("need at least two labelled classes")
    config = (config or EswConfig()).resolve(cube.nz, graph.n_vertices)

    gu, gv = gt[graph.edges[:, 0]], gt[graph.edges[:, 1]]
    keep = (gu != UNLABELLED) & (gv != UNLABELLED)
    same_mask = (gu == gv)[keep]
    same, different = [], []
    for i in range(config.n_repeats):
        rng = repetition_rng(config.master_seed, i, stream=1)
        bands = np.sort(rng.choice(cube.nz, config.kappa_f, replace=False))
        d = edge_distances(cube, graph, bands)[keep]
        same.append(d[same_mask])
        different.append(d[~same_mask])
    return SubsetDistanceSamples(np.concatenate(same), np.concatenate(different))
