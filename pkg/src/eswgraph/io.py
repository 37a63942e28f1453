"""Binary cube/groundtruth/edge-weight files, synthetic cubes and plots.

All binary formats are little-endian with a 4-byte magic and a ``u16``
version (currently 1):

========  ==============================================================
HSIC      ``nr, nc, nz: u32`` then ``nr*nc*nz`` float32, pixel-major
HSIG      ``nr, nc: u32`` then ``nr*nc`` uint16 labels, 0 = unlabelled
HSIW      ``nr, nc, n_edges: u32`` then ``n_edges`` float64 in canonical
          edge order, then ``N, kappa_f, kappa_v: u32, master_seed: u64``
========  ==============================================================
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import UNLABELLED, GridGraph, HyperCube, WeightKind
from .errors import FormatError
from .watershed import EswConfig, EswEdgeWeights

VERSION = 1
_CUBE_HEADER = struct.Struct("<4sHIII")
_GT_HEADER = struct.Struct("<4sHII")
_WEIGHT_HEADER = struct.Struct("<4sHIII")
_WEIGHT_TRAILER = struct.Struct("<IIIQ")


def _check_header(buf, header, magic, what):
    if len(buf) < header.size:
        raise FormatError(f"{what}: header needs {header.size} bytes, file has {len(buf)}",
                          len(buf))
    fields = header.unpack_from(buf)
    if fields[0] != magic:
        raise FormatError(f"{what}: bad magic {fields[0]!r}, expected {magic!r}", 0)
    if fields[1] != VERSION:
        raise FormatError(f"{what}: unsupported version {fields[1]}", 4)
    return fields[2:]


def _check_payload(buf, offset, expected, what):
    actual = len(buf) - offset
    if actual != expected:
        raise FormatError(f"{what}: expected {expected} payload bytes, found {actual}",
                          min(len(buf), offset + expected))


def dump_cube(cube: HyperCube) -> bytes:
    data = cube.array.astype("<f4")
    if not np.all(np.isfinite(data)):
        raise ValueError("cube values overflow float32")
    return _CUBE_HEADER.pack(b"HSIC", VERSION, cube.nr, cube.nc, cube.nz) + data.tobytes()


def load_cube(buf: bytes) -> HyperCube:
    nr, nc, nz = _check_header(buf, _CUBE_HEADER, b"HSIC", "cube")
    if min(nr, nc, nz) < 1:
        raise FormatError(f"cube: zero dimension ({nr}, {nc}, {nz})", 6)
    off = _CUBE_HEADER.size
    _check_payload(buf, off, 4 * nr * nc * nz, "cube")
    data = np.frombuffer(buf, dtype="<f4", offset=off)
    bad = np.flatnonzero(~np.isfinite(data))
    if len(bad):
        raise FormatError("cube: non-finite value in payload", off + 4 * int(bad[0]))
    return HyperCube(data.astype(np.float64).reshape(nr, nc, nz))


def dump_groundtruth(labels, nr, nc) -> bytes:
    labels = np.asarray(labels).ravel()
    if labels.size != nr * nc:
        raise ValueError(f"expected {nr * nc} labels, got {labels.size}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 0xFFFF:
        raise ValueError("labels must fit in uint16")
    return _GT_HEADER.pack(b"HSIG", VERSION, nr, nc) + labels.astype("<u2").tobytes()


def load_groundtruth(buf: bytes):
    """Return ``(labels, nr, nc)`` with ``labels`` a flat int64 array."""
    nr, nc = _check_header(buf, _GT_HEADER, b"HSIG", "groundtruth")
    if min(nr, nc) < 1:
        raise FormatError(f"groundtruth: zero dimension ({nr}, {nc})", 6)
    off = _GT_HEADER.size
    _check_payload(buf, off, 2 * nr * nc, "groundtruth")
    labels = np.frombuffer(buf, dtype="<u2", offset=off).astype(np.int64)
    return labels, nr, nc


def dump_weights(weights, nr, nc) -> bytes:
    values = np.asarray(weights.values, dtype="<f8")
    expected = nr * (nc - 1) + nc * (nr - 1)
    if len(values) != expected:
        raise ValueError(f"{len(values)} weights for a {nr}x{nc} grid ({expected} edges)")
    cfg = getattr(weights, "config", None) or EswConfig(0, 0, 0, 0)
    trailer = _WEIGHT_TRAILER.pack(cfg.n_repeats, cfg.kappa_f or 0, cfg.kappa_v or 0,
                                   cfg.master_seed)
    return _WEIGHT_HEADER.pack(b"HSIW", VERSION, nr, nc, len(values)) + values.tobytes() + trailer


def load_weights(buf: bytes):
    """Return ``(EswEdgeWeights, nr, nc)``; the config is ``None`` when the trailer is zero."""
    nr, nc, n_edges = _check_header(buf, _WEIGHT_HEADER, b"HSIW", "edge weights")
    if min(nr, nc) < 1:
        raise FormatError(f"edge weights: zero dimension ({nr}, {nc})", 6)
    expected = nr * (nc - 1) + nc * (nr - 1)
    if n_edges != expected:
        raise FormatError(f"edge weights: n_edges {n_edges} != {expected} for {nr}x{nc}", 14)
    off = _WEIGHT_HEADER.size
    _check_payload(buf, off, 8 * n_edges + _WEIGHT_TRAILER.size, "edge weights")
    values = np.frombuffer(buf, dtype="<f8", count=n_edges, offset=off)
    bad = np.flatnonzero(~np.isfinite(values) | (values < 0))
    if len(bad):
        raise FormatError("edge weights: negative or non-finite weight",
                          off + 8 * int(bad[0]))
    n_rep, kf, kv, seed = _WEIGHT_TRAILER.unpack_from(buf, off + 8 * n_edges)
    config = EswConfig(n_rep, kf, kv, seed) if n_rep else None
    return EswEdgeWeights(values, WeightKind.DISSIMILARITY, config), nr, nc


def _read(path):
    return Path(path).read_bytes()


def _write(path, data):
    Path(path).write_bytes(data)


def read_cube(path) -> HyperCube:
    return load_cube(_read(path))


def write_cube(cube: HyperCube, path):
    _write(path, dump_cube(cube))


def read_groundtruth(path):
    return load_groundtruth(_read(path))


def write_groundtruth(labels, nr, nc, path):
    _write(path, dump_groundtruth(labels, nr, nc))


def read_weights(path):
    return load_weights(_read(path))


def write_weights(weights, nr, nc, path):
    _write(path, dump_weights(weights, nr, nc))


class Layout(str, enum.Enum):
    STRIPES = "stripes"
    BLOCKS = "blocks"
    VORONOI = "voronoi"


@dataclass(frozen=True)
class SynthSpec:
    """Piecewise-constant synthetic cube with partially shared class spectra.

    Distinct classes have identical means on ``floor(rho * nz)`` bands and
    are at least ``separation`` apart on every other band. ``means`` overrides
    the generated class spectra (shape ``(n_classes, nz)``).
    """

    nr: int = 32
    nc: int = 32
    nz: int = 16
    n_classes: int = 4
    layout: Layout = Layout.VORONOI
    rho: float = 0.5
    sigma: float = 0.2
    separation: float = 1.0
    seed: int = 0
    n_sites: int | None = None
    means: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "layout", Layout(self.layout))
        if min(self.nr, self.nc, self.nz) < 1:
            raise ValueError("nr, nc and nz must be positive")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_classes > self.nr * self.nc:
            raise ValueError("more classes than pixels")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if self.means is None:
            if int(np.floor(self.rho * self.nz)) >= self.nz:
                raise ValueError(f"rho={self.rho} makes every class identical on all bands")
            if self.separation <= 0 or self.separation < 5 * self.sigma:
                raise ValueError("separation must be positive and at least 5 * sigma")


def _layout_labels(spec: SynthSpec, rng):
    nr, nc, k = spec.nr, spec.nc, spec.n_classes
    rows, cols = np.mgrid[0:nr, 0:nc]
    if spec.layout is Layout.STRIPES:
        return cols * k // nc + 1 if nc >= k else rows * k // nr + 1
    if spec.layout is Layout.BLOCKS:
        br = int(np.floor(np.sqrt(k)))
        bc = int(np.ceil(k / br))
        block = (rows * br // nr) * bc + cols * bc // nc
        return block % k + 1
    n_sites = spec.n_sites or 3 * k
    sites = rng.choice(nr * nc, max(n_sites, k), replace=False)
    sr, sc = np.divmod(sites, nc)
    d2 = (rows[..., None] - sr) ** 2 + (cols[..., None] - sc) ** 2
    return np.argmin(d2, axis=-1) % k + 1


def class_means(spec: SynthSpec, rng=None):
    if spec.means is not None:
        means = np.asarray(spec.means, dtype=np.float64)
        if means.shape != (spec.n_classes, spec.nz):
            raise ValueError(f"means must have shape {(spec.n_classes, spec.nz)}")
        return means
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n_shared = int(np.floor(spec.rho * spec.nz))
    base = 1.0 + rng.uniform(0.0, 1.0, spec.nz)
    means = np.tile(base, (spec.n_classes, 1))
    for b in rng.permutation(spec.nz)[n_shared:]:
        means[:, b] += spec.separation * rng.permutation(spec.n_classes)
    return means


def synth_cube(spec: SynthSpec):
    """Return ``(cube, labels)`` for ``spec``; labels are a flat array of 1-based ids."""
    rng = np.random.default_rng(spec.seed)
    labels = _layout_labels(spec, rng)
    means = class_means(spec, rng)
    if spec.means is not None:
        for a in range(spec.n_classes):
            for b in range(a):
                if np.array_equal(means[a], means[b]):
                    raise ValueError(f"classes {b + 1} and {a + 1} have identical spectra")
    data = means[labels - 1] + rng.normal(0.0, spec.sigma, (spec.nr, spec.nc, spec.nz))
    return HyperCube(data), labels.ravel().astype(np.int64)


def cubical_image(graph: GridGraph, weights) -> np.ndarray:
    """Edge weights on the doubled grid: pixels at even/even, edges between them."""
    values = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    if len(values) != graph.n_edges:
        raise ValueError(f"{len(values)} weights for {graph.n_edges} edges")
    wmax = values.max(initial=0.0)
    scaled = np.rint(255.0 * values / (wmax if wmax > 0 else 1.0)).astype(np.uint8)
    nr, nc = graph.nr, graph.nc
    img = np.zeros((2 * nr - 1, 2 * nc - 1), dtype=np.uint8)
    ur, uc = np.divmod(graph.edges[:, 0], nc)
    vr, vc = np.divmod(graph.edges[:, 1], nc)
    img[ur + vr, uc + vc] = scaled
    if nr > 1 and nc > 1:
        up, down = img[0:-1:2, 1::2], img[2::2, 1::2]
        left, right = img[1::2, 0:-1:2], img[1::2, 2::2]
        img[1::2, 1::2] = np.maximum(np.maximum(up, down), np.maximum(left, right))
    return img


def export_cubical_pgm(graph: GridGraph, weights, path):
    img = cubical_image(graph, weights)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    _write(path, header + img.tobytes())


def write_results_csv(results, path, timing=True):
    """One row per result. ``timing=False`` leaves ``wall_ms`` empty for reproducible bytes."""
    if not results:
        raise ValueError("no results to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "trial", results[0].x_name, "oa", "wall_ms"])
        for r in results:
            wall = f"{r.wall_ms:.3f}" if timing else ""
            writer.writerow([r.method, r.trial, r.x, f"{r.oa:.6f}", wall])


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def curve_svg(curves, xlabel="x", ylabel="overall accuracy", title="") -> str:
    """Line chart with one polyline per ``{name: (xs, ys)}`` entry."""
    if not curves:
        raise ValueError("no curves to plot")
    width, height, margin = 640, 420, 60
    xs = np.concatenate([np.asarray(c[0], dtype=float) for c in curves.values()])
    ys = np.concatenate([np.asarray(c[1], dtype=float) for c in curves.values()])
    if xs.size == 0:
        raise ValueError("curves are empty")
    x0, x1 = xs.min(), xs.max()
    y0, y1 = min(ys.min(), 0.0), max(ys.max(), 1.0)
    if x1 == x0:
        x1 = x0 + 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 15}" text-anchor="middle" '
        f'font-size="14">{xlabel}</text>',
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height / 2:.1f})">{ylabel}</text>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="30" text-anchor="middle" '
                   f'font-size="16">{title}</text>')
    for tick in np.linspace(y0, y1, 6):
        out.append(f'<text x="{margin - 8}" y="{sy(tick) + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{tick:.2f}</text>')
    for tick in np.linspace(x0, x1, 6):
        out.append(f'<text x="{sx(tick):.2f}" y="{height - margin + 18}" '
                   f'text-anchor="middle" font-size="11">{tick:g}</text>')
    for i, (name, (cx, cy)) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(cx, cy))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = margin + 18 * i
        out.append(f'<line x1="{width - margin - 110}" y1="{ly}" x2="{width - margin - 90}" '
                   f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - margin - 85}" y="{ly + 4}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_curve_svg(curves, path, **labels):
    _write(path, curve_svg(curves, **labels).encode("utf-8"))
