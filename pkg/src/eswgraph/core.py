"""Hyperspectral cube container, 4-adjacency pixel graph and union-find.

Conventions used throughout the package:

* pixel ``(r, c)`` is vertex ``r * nc + c``;
* cube data is pixel-major, i.e. ``cube.pixels[v]`` is the spectrum of vertex ``v``;
* edges are ``(u, v)`` pairs with ``u < v`` sorted lexicographically, so an
  edge-weight array is just a vector aligned with ``graph.edges``;
* label arrays are integer vectors over vertices, ``UNLABELLED == 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

UNLABELLED = 0


@dataclass(frozen=True)
class HyperCube:
    """An ``nr x nc`` image with ``nz`` spectral bands per pixel."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"cube must be 3-D (nr, nc, nz), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"cube dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("cube contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @classmethod
    def from_flat(cls, data, nr, nc, nz):
        data = np.asarray(data)
        if data.size != nr * nc * nz:
            raise ValueError(f"expected {nr * nc * nz} values, got {data.size}")
        return cls(data.reshape(nr, nc, nz))

    @property
    def nr(self) -> int:
        return self.array.shape[0]

    @property
    def nc(self) -> int:
        return self.array.shape[1]

    @property
    def nz(self) -> int:
        return self.array.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.nr * self.nc

    @property
    def pixels(self) -> np.ndarray:
        """``(nr * nc, nz)`` view, one row per vertex."""
        return self.array.reshape(-1, self.nz)


@dataclass(frozen=True)
class GridGraph:
    nr: int
    nc: int
    edges: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.nr * self.nc

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex(self, r, c):
        return r * self.nc + c


class WeightKind(str, enum.Enum):
    DISSIMILARITY = "dissimilarity"
    SIMILARITY = "similarity"


@dataclass(frozen=True)
class EdgeWeights:
    values: np.ndarray
    kind: WeightKind = WeightKind.DISSIMILARITY

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("edge weights must be a 1-D array")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("edge weights must be finite and non-negative")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", WeightKind(self.kind))

    def __len__(self):
        return len(self.values)

    def check_graph(self, graph: GridGraph):
        if len(self.values) != graph.n_edges:
            raise ValueError(
                f"{len(self.values)} weights for a graph with {graph.n_edges} edges"
            )


def build_grid_graph(nr: int, nc: int) -> GridGraph:
    """Return the 4-adjacency graph of an ``nr x nc`` grid in canonical edge order."""
    nr, nc = int(nr), int(nc)
    if nr < 1 or nc < 1:
        raise ValueError(f"grid dimensions must be positive, got ({nr}, {nc})")
    ids = np.arange(nr * nc, dtype=np.int64).reshape(nr, nc)
    right = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
    down = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
    edges = np.concatenate([right, down]).reshape(-1, 2)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = np.ascontiguousarray(edges[order])
    edges.setflags(write=False)
    return GridGraph(nr, nc, edges)


def _check_bands(bands, nz):
    bands = np.asarray(bands, dtype=np.int64).ravel()
    if bands.size == 0:
        raise ValueError("band subset is empty")
    if bands.min() < 0 or bands.max() >= nz:
        raise ValueError(f"band index out of range [0, {nz})")
    return bands


def subset_distance(cube: HyperCube, u: int, v: int, bands) -> float:
    """Euclidean distance between the spectra of ``u`` and ``v`` on ``bands``."""
    n = cube.n_pixels
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"vertex out of range [0, {n})")
    bands = _check_bands(bands, cube.nz)
    diff = cube.pixels[u, bands] - cube.pixels[v, bands]
    return float(np.sqrt(np.dot(diff, diff)))


def edge_distances(cube: HyperCube, graph: GridGraph, bands=None) -> np.ndarray:
    """Vectorised :func:`subset_distance` over every edge of ``graph``."""
    if (cube.nr, cube.nc) != (graph.nr, graph.nc):
        raise ValueError("cube and graph dimensions differ")
    px = cube.pixels if bands is None else cube.pixels[:, _check_bands(bands, cube.nz)]
    diff = px[graph.edges[:, 0]] - px[graph.edges[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


class UnionFind:
    """Disjoint sets with union by rank, path compression and a label per set.

    ``label`` is only meaningful at representatives; read it through
    :meth:`component_label`.
    """

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("size must be non-negative")
        self.parent = list(range(n))
        self.rank = [0] * n
        self.label = [UNLABELLED] * n

    def __len__(self):
        return len(self.parent)

    def _check(self, x):
        if not 0 <= x < len(self.parent):
            raise ValueError(f"index {x} out of range [0, {len(self.parent)})")

    def find(self, x: int) -> int:
        self._check(x)
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        if self.label[ra] == UNLABELLED:
            self.label[ra] = self.label[rb]
        return ra

    def component_label(self, x: int) -> int:
        return self.label[self.find(x)]

    def set_label(self, x: int, label: int):
        self.label[self.find(x)] = label
