"""Datasets, projections, CSV I/O and synthetic manifold generators."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed or invalid input data."""


@dataclass
class Dataset:
    """N x D feature matrix with optional integer class labels."""

    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = "data"
    label_names: list[str] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"points must be a non-empty 2D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = np.argwhere(~np.isfinite(pts))[0]
            raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        self.points = pts
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise DataError(
                    f"labels length {lab.shape} does not match {pts.shape[0]} points"
                )
            if lab.size and (lab.min() < 0 or not np.issubdtype(lab.dtype, np.integer)):
                raise DataError("labels must be non-negative integers")
            self.labels = lab.astype(np.int64)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.points[index], labels, self.name, self.label_names)


@dataclass
class Projection:
    """Embedded coordinates; row i corresponds to row i of the source data."""

    coords: np.ndarray
    seed: int | None = None
    config_digest: str = ""
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            raise DataError(f"coords must be 2D, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise DataError("projection contains non-finite coordinates")
        self.coords = coords

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def standardize(data: Dataset) -> Dataset:
    """Z-score each column using the population (1/N) variance.

    Zero-variance columns become all zeros. A column counts as constant
    when its std is below float rounding of its magnitude.
    """
    if data.n < 2:
        raise DataError("standardize needs at least 2 points")
    x = data.points
    mean = x.mean(axis=0)
    centered = x - mean
    std = np.sqrt((centered**2).mean(axis=0))
    constant = std <= 1e-12 * np.abs(x).max(axis=0)
    out = centered / np.where(constant, 1.0, std)
    out[:, constant] = 0.0
    return Dataset(out, data.labels, data.name, data.label_names)


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric value {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {cell!r} at row {row}, column {col}")
    return value


def load_csv(path, label_column: str | None = None, name: str | None = None) -> Dataset:
    """Read a headered CSV into a Dataset.

    Lines starting with ``#`` are treated as comments. Row numbers in error
    messages are 1-based data rows (the header is row 0). Non-integer labels
    are dictionary-encoded in order of first appearance.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.reader(lines)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise DataError(
                    f"unknown label column {label_column!r}; header has {header}"
                )
            label_idx = header.index(label_column)
        feature_cols = [c for c in range(len(header)) if c != label_idx]
        rows, raw_labels = [], []
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"ragged row {r}: expected {len(header)} columns, found {len(row)}"
                )
            rows.append([_parse_float(row[c], r, c) for c in feature_cols])
            if label_idx is not None:
                raw_labels.append(row[label_idx].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    if not feature_cols:
        raise DataError(f"{path}: no feature columns")

    labels = label_names = None
    if label_idx is not None:
        try:
            labels = np.array([int(v) for v in raw_labels], dtype=np.int64)
            if labels.min() < 0:
                raise ValueError
        except ValueError:
            label_names = list(dict.fromkeys(raw_labels))
            lookup = {v: i for i, v in enumerate(label_names)}
            labels = np.array([lookup[v] for v in raw_labels], dtype=np.int64)
    if name is None:
        name = os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(np.array(rows, dtype=np.float64), labels, name, label_names)


def _fmt(value: float) -> str:
    # repr round-trips float64 exactly; drop the trailing ".0" on integral values
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def save_csv(obj, path, comments: list[str] | None = None) -> None:
    """Write a Dataset (columns f0..f{D-1}[,label]) or Projection (x,y[,z..],label).

    The label column is omitted when there are no labels. ``comments`` are
    emitted first as ``#`` lines. Nothing is written on error.
    """
    if isinstance(obj, Projection):
        values = obj.coords
        axis_names = ["x", "y", "z"]
        header = [axis_names[i] if i < 3 else f"d{i}" for i in range(values.shape[1])]
        labels = obj.labels
    elif isinstance(obj, Dataset):
        values = obj.points
        header = [f"f{i}" for i in range(values.shape[1])]
        labels = obj.labels
    else:
        raise TypeError(f"cannot save {type(obj).__name__} as CSV")
    if values.shape[0] == 0:
        raise DataError("refusing to write an empty table")
    if labels is not None:
        header.append("label")

    lines = [f"# {c}" for c in (comments or [])]
    lines.append(",".join(header))
    for i, row in enumerate(values):
        cells = [_fmt(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)

    if isinstance(obj, Dataset) and obj.label_names:
        with open(str(path) + ".labels", "w", encoding="utf-8") as fh:
            for i, label in enumerate(obj.label_names):
                fh.write(f"{i},{label}\n")


def _header(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        line = next((line for line in fh if not line.startswith("#")), None)
    if line is None:
        raise DataError(f"{path}: empty file")
    return [h.strip() for h in line.split(",")]


def load_labeled_csv(path, name: str | None = None) -> Dataset:
    """:func:`load_csv` that uses a ``label`` column when the header has one."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    label = "label" if "label" in _header(path) else None
    return load_csv(path, label_column=label, name=name)


def load_projection(path) -> Projection:
    """Read a projection CSV written by :func:`save_csv`."""
    data = load_labeled_csv(path)
    return Projection(data.points, labels=data.labels)


def _quartile_labels(t: np.ndarray) -> np.ndarray:
    edges = np.quantile(t, [0.25, 0.5, 0.75])
    return np.searchsorted(edges, t, side="right").astype(np.int64)


def gen_swiss_roll(n: int = 5000, seed: int = 0) -> Dataset:
    """Swiss roll: (t cos t, h, t sin t) with t ~ U(1.5pi, 4.5pi), h ~ U(0, 21)."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    t = 1.5 * np.pi * (1 + 2 * rng.random(n))
    h = 21.0 * rng.random(n)
    pts = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    return Dataset(pts, _quartile_labels(t), "swiss_roll")


def gen_s_curve(n: int = 5000, seed: int = 0) -> Dataset:
    """S-curve: (sin t, h, sign(t)(cos t - 1)) with t ~ U(-1.5pi, 1.5pi), h ~ U(0, 2)."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    t = 3 * np.pi * (rng.random(n) - 0.5)
    h = 2.0 * rng.random(n)
    pts = np.column_stack([np.sin(t), h, np.sign(t) * (np.cos(t) - 1)])
    return Dataset(pts, _quartile_labels(t), "s_curve")


def _sphere_surface(rng, n: int, dim: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return radius * g / norms


def gen_spheres(
    n_inner_spheres: int = 10,
    n_per_inner: int = 500,
    n_outer: int = 5000,
    dim: int = 101,
    inner_radius: float = 5.0,
    seed: int = 0,
    center_std: float | None = None,
    return_centers: bool = False,
):
    """Small hyperspheres enclosed by a large one.

    Inner spheres have radius ``inner_radius`` and centers drawn from an
    isotropic Gaussian with per-axis std ``center_std`` (default
    ``2 * inner_radius / sqrt(dim)``, so centers sit at norm ~2 radii and the
    inner spheres stay inside the enclosing sphere of radius
    ``5 * inner_radius``). Labels are 0..n_inner_spheres-1 for inner spheres
    and n_inner_spheres for the enclosing one.
    """
    if dim < 2:
        raise DataError("spheres need dim >= 2")
    if min(n_inner_spheres, n_per_inner, n_outer) < 0:
        raise DataError("counts must be non-negative")
    if n_inner_spheres * n_per_inner + n_outer < 1:
        raise DataError("spheres dataset would be empty")
    if center_std is None:
        center_std = 2.0 * inner_radius / math.sqrt(dim)
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_std, size=(n_inner_spheres, dim))
    blocks, labels = [], []
    for s in range(n_inner_spheres):
        blocks.append(centers[s] + _sphere_surface(rng, n_per_inner, dim, inner_radius))
        labels.append(np.full(n_per_inner, s))
    blocks.append(_sphere_surface(rng, n_outer, dim, 5.0 * inner_radius))
    labels.append(np.full(n_outer, n_inner_spheres))
    ds = Dataset(np.vstack(blocks), np.concatenate(labels), "spheres")
    if return_centers:
        return ds, centers
    return ds


def load_mammoth(path) -> Dataset:
    """Load a 3D point cloud (e.g. the mammoth skeleton) from CSV.

    An optional ``label`` column is used when present.
    """
    data = load_labeled_csv(path, name="mammoth")
    if data.dim != 3:
        raise DataError(f"expected 3 dimensions, found {data.dim}")
    return data
