"""Projection quality metrics and Procrustes-based stability protocols.

Rank-based metrics (trustworthiness, continuity, MRRE) compare k-nearest
neighbor ranks between the data and the projection. Density metrics (KL,
DTM) compare Gaussian-kernel density estimates and, together with stress,
expect standardized inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .dataset import Dataset, Projection


def _points(obj) -> np.ndarray:
    if isinstance(obj, Dataset):
        return obj.points
    if isinstance(obj, Projection):
        return obj.coords
    return np.asarray(obj, dtype=np.float64)


@dataclass
class RankTables:
    """1-based neighbor ranks; ``hd[i, j]`` is the rank of j among i's
    neighbors (0 on the diagonal). Equal distances rank by lower index."""

    hd: np.ndarray
    ld: np.ndarray


def _rank_rows(dist: np.ndarray, row_offset: int) -> np.ndarray:
    d = dist.copy()
    rows = np.arange(d.shape[0])
    d[rows, rows + row_offset] = -np.inf
    order = np.argsort(d, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(d.shape[1])[None, :], axis=1)
    return ranks


def rank_tables(data, proj) -> RankTables:
    x, y = _points(data), _points(proj)
    return RankTables(_rank_rows(cdist(x, x), 0), _rank_rows(cdist(y, y), 0))


def _check_k(n: int, k: int):
    if not 1 <= k < n / 2:
        raise ValueError(f"k must satisfy 1 <= k < N/2 (k={k}, N={n})")


def _rank_chunks(x, y, chunk=512):
    n = x.shape[0]
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        yield (start, _rank_rows(cdist(x[start:stop], x), start),
               _rank_rows(cdist(y[start:stop], y), start))


def _rank_sums(data, proj, k: int):
    """Accumulate the four rank-penalty sums in one pass over row chunks."""
    x, y = _points(data), _points(proj)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("data and projection have different row counts")
    _check_k(n, k)
    trust = cont = mrre_f = mrre_m = 0.0
    for _, r_hd, r_ld in _rank_chunks(x, y):
        nn_hd = (r_hd >= 1) & (r_hd <= k)
        nn_ld = (r_ld >= 1) & (r_ld <= k)
        trust += (r_hd - k)[nn_ld & ~nn_hd].sum()
        cont += (r_ld - k)[nn_hd & ~nn_ld].sum()
        err = np.abs(r_hd - r_ld).astype(np.float64)
        mrre_f += (err[nn_ld] / r_ld[nn_ld]).sum()
        mrre_m += (err[nn_hd] / r_hd[nn_hd]).sum()
    return n, float(trust), float(cont), mrre_f, mrre_m


def _tc_norm(n: int, k: int) -> float:
    return 2.0 / (n * k * (2 * n - 3 * k - 1))


def _mrre_norm(n: int, k: int) -> float:
    return n * sum(abs(n - 2 * l + 1) / l for l in range(1, k + 1))


def trustworthiness(data, proj, k: int) -> float:
    n, trust, _, _, _ = _rank_sums(data, proj, k)
    return 1.0 - _tc_norm(n, k) * trust


def continuity(data, proj, k: int) -> float:
    n, _, cont, _, _ = _rank_sums(data, proj, k)
    return 1.0 - _tc_norm(n, k) * cont


def mrre_f(data, proj, k: int) -> float:
    """1 - mean relative rank error over projection neighborhoods."""
    n, _, _, err, _ = _rank_sums(data, proj, k)
    return 1.0 - err / _mrre_norm(n, k)


def mrre_m(data, proj, k: int) -> float:
    """1 - mean relative rank error over data-space neighborhoods."""
    n, _, _, _, err = _rank_sums(data, proj, k)
    return 1.0 - err / _mrre_norm(n, k)


def rank_metrics(data, proj, k: int) -> dict:
    """All four rank metrics from a single pass."""
    n, trust, cont, ef, em = _rank_sums(data, proj, k)
    c = _tc_norm(n, k)
    norm = _mrre_norm(n, k)
    return {
        "trustworthiness": 1.0 - c * trust,
        "continuity": 1.0 - c * cont,
        "mrre_f": 1.0 - ef / norm,
        "mrre_m": 1.0 - em / norm,
    }


def _density(points: np.ndarray, sigma: float) -> np.ndarray:
    d = pdist(points)
    dmax = d.max() if d.size else 0.0
    if dmax > 0:
        d = d / dmax
    kernel = squareform(np.exp(-(d**2) / sigma))
    rho = kernel.sum(axis=1)
    return rho / rho.sum()


def _density_pair(data, proj, sigma: float):
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x, y = _points(data), _points(proj)
    if x.shape[0] != y.shape[0]:
        raise ValueError("data and projection have different row counts")
    return _density(x, sigma), _density(y, sigma)


def density_kl(data, proj, sigma: float) -> float:
    p, q = _density_pair(data, proj, sigma)
    return float(np.sum(p * np.log(p / q)))


def dtm(data, proj, sigma: float) -> float:
    p, q = _density_pair(data, proj, sigma)
    return float(np.linalg.norm(p - q))


def stress(data, proj) -> float:
    """Kruskal stress-1 between data and projection distances."""
    x, y = _points(data), _points(proj)
    if x.shape[0] < 2:
        raise ValueError("stress needs at least 2 points")
    hd, ld = pdist(x), pdist(y)
    return float(np.sqrt(np.sum((hd - ld) ** 2) / np.sum(hd**2)))


def f1(t: float, c: float) -> float:
    return 2.0 * t * c / (t + c) if t + c > 0 else 0.0


def procrustes_distance(proj_a, proj_b) -> float:
    """Residual after optimal translation, unit-norm scaling and orthogonal
    alignment of two row-matched point sets; in [0, sqrt(2)]."""
    a, b = _points(proj_a), _points(proj_b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cannot align a degenerate (single-location) point set")
    a, b = a / na, b / nb
    u, _, vt = np.linalg.svd(a.T @ b)
    r = u @ vt
    return float(np.linalg.norm(a @ r - b))


def class_pair_kl(data, proj, labels, sigma: float):
    """KL divergence on each two-class subset; returns (matrix, classes, total)."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("class_pair_kl needs at least 2 classes")
    x, y = _points(data), _points(proj)
    m = np.zeros((len(classes), len(classes)))
    for a in range(len(classes)):
        for b in range(a + 1, len(classes)):
            mask = (labels == classes[a]) | (labels == classes[b])
            m[a, b] = m[b, a] = density_kl(x[mask], y[mask], sigma)
    return m, classes, float(m.sum())


# An embedder maps (Dataset, seed, init, init_seed) to an N x d array.
Embedder = Callable[..., np.ndarray]


def stability_subsample(data: Dataset, embedder: Embedder, rate: float, seed: int = 0,
                        full: np.ndarray | None = None) -> float:
    """Procrustes distance between the projection of a random subsample and
    the same rows of the full projection (``full`` may be precomputed)."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    n = data.n
    m = math.ceil(rate * n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    if full is None:
        full = embedder(data, seed=seed)
    sub = embedder(data.subset(idx), seed=seed)
    return procrustes_distance(sub, np.asarray(full)[idx])


def stability_init(data: Dataset, embedder: Embedder, n_random_inits: int = 3,
                   seed: int = 0) -> float:
    """Mean pairwise Procrustes distance over projections started from the
    PCA initialization and ``n_random_inits`` random ones."""
    projections = [embedder(data, seed=seed, init="pca")]
    for r in range(n_random_inits):
        projections.append(embedder(data, seed=seed, init="random", init_seed=seed + 1 + r))
    dists = [
        procrustes_distance(projections[i], projections[j])
        for i in range(len(projections))
        for j in range(i + 1, len(projections))
    ]
    return float(np.mean(dists))


@dataclass
class MetricReport:
    scores: list = field(default_factory=list)  # (metric, parameter, value)
    data_digest: str = ""
    projection_digest: str = ""

    def add(self, metric: str, parameter, value: float):
        if not math.isfinite(value):
            raise ValueError(f"{metric}({parameter}) is not finite")
        self.scores.append((metric, parameter, float(value)))

    def as_dict(self) -> dict:
        return {f"{m}@{p}" if p != "" else m: v for m, p, v in self.scores}

    def long_rows(self):
        return [("metric", "parameter", "value")] + [
            (m, p, repr(v)) for m, p, v in self.scores
        ]

    def wide_rows(self):
        d = self.as_dict()
        return [tuple(d.keys()), tuple(repr(v) for v in d.values())]


def evaluate(data, proj, metrics=None, ks=(10, 50), sigmas=(0.1, 1.0)) -> MetricReport:
    """Score a projection over a grid of k (rank metrics) and sigma (density)."""
    rank_names = ("trustworthiness", "continuity", "mrre_f", "mrre_m")
    density_names = ("kl", "dtm")
    if metrics is None:
        metrics = rank_names + ("f1_tc",) + density_names + ("stress",)
    report = MetricReport()
    for k in ks:
        wanted = [m for m in rank_names + ("f1_tc",) if m in metrics]
        if wanted:
            scores = rank_metrics(data, proj, k)
            scores["f1_tc"] = f1(scores["trustworthiness"], scores["continuity"])
            for m in wanted:
                report.add(m, k, scores[m])
    for sigma in sigmas:
        if "kl" in metrics:
            report.add("kl", sigma, density_kl(data, proj, sigma))
        if "dtm" in metrics:
            report.add("dtm", sigma, dtm(data, proj, sigma))
    if "stress" in metrics:
        report.add("stress", "", stress(data, proj))
    return report
