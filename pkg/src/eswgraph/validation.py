"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numbers

import numpy as np

from .core import EdgeWeights, GridGraph, HyperCube, WeightKind


def check_cube(X) -> HyperCube:
    """Accept a :class:`HyperCube`, an ``(nr, nc, nz)`` array or a single-band image."""
    if isinstance(X, HyperCube):
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return HyperCube(arr)


def check_label_image(y, n_pixels, name="labels"):
    y = np.asarray(y)
    if y.size != n_pixels:
        raise ValueError(f"{name} has {y.size} entries, expected {n_pixels}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError(f"{name} must be integers")
    y = y.astype(np.int64).ravel()
    if np.any(y < 0):
        raise ValueError(f"{name} must be non-negative (0 marks unlabelled pixels)")
    return y


def check_edge_weights(w, graph: GridGraph, kind=WeightKind.DISSIMILARITY) -> EdgeWeights:
    if not isinstance(w, EdgeWeights):
        w = EdgeWeights(np.asarray(w, dtype=np.float64).ravel(), kind)
    w.check_graph(graph)
    return w


def check_int(name, value, minimum=None, maximum=None, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name} must be <= {maximum}, got {value}")
    return value
