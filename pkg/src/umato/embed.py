"""Two-phase hub-anchored layout optimization and a single-phase baseline.

The pipeline: kNN -> hub/eNN/DCP classification -> exact cross-entropy
descent over the hubs -> eNN initialization from hub positions ->
negative-sampled refinement of hubs and eNNs -> DCP placement.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import _layout
from .classify import PointClassification, classify_points
from .dataset import Dataset, Projection
from .neighbors import KnnIndex, build_knn, fuzzy_graph, knn_exact

INIT_STD = 10.0
RANDOM_INIT_RANGE = 10.0


class OptimizationError(RuntimeError):
    """Raised when the optimizer produces non-finite values."""


@dataclass
class EmbedConfig:
    k: int = 50
    n_h: int = 300
    d: int = 2
    e_g: int = 500
    e_l: int = 100
    min_dist: float = 0.1
    a: float | None = None
    b: float | None = None
    gamma: float = 1.0
    M: int = 5
    epsilon: float = 1e-3
    hub_attract_penalty: float = 0.1
    repulse_penalty: float = 0.1
    m_init: int = 10
    lr_global: float = 1.0
    lr_local: float = 1.0
    seed: int = 0
    knn_method: str = "auto"
    init: str = "pca"
    init_seed: int | None = None
    enn_noise: bool = True  # off only for equivariance checks

    def __post_init__(self):
        for name in ("k", "n_h", "d", "e_g", "e_l", "m_init"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if self.min_dist < 0:
            raise ValueError("min_dist must be >= 0")
        for name in ("hub_attract_penalty", "repulse_penalty"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("a", "b"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.init not in ("pca", "random"):
            raise ValueError(f"unknown init {self.init!r}")

    def curve(self) -> tuple[float, float]:
        if self.a is not None and self.b is not None:
            return float(self.a), float(self.b)
        return fit_ab(self.min_dist)

    def replace(self, **changes) -> "EmbedConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class OptTrace:
    global_loss: list = field(default_factory=list)
    local_loss: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def rows(self):
        for e, loss in enumerate(self.global_loss):
            yield e, "global", loss
        for e, loss in enumerate(self.local_loss):
            yield e, "local", loss

    def save_csv(self, path, comments=None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for c in comments or []:
                fh.write(f"# {c}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "phase", "loss"])
            for e, phase, loss in self.rows():
                writer.writerow([e, phase, repr(float(loss))])


def _ab_curve(t, a, b):
    return 1.0 / (1.0 + a * t ** (2 * b))


@functools.lru_cache(maxsize=64)
def fit_ab(min_dist: float, spread: float = 1.0, skip_if_zero: bool = False):
    """Least-squares fit of ``1 / (1 + a t^2b)`` to the min_dist target curve.

    The target is 1 up to ``min_dist`` and ``exp(-(t - min_dist) / spread)``
    beyond, sampled at 300 points on [0, 3 * spread].
    """
    if min_dist < 0:
        raise ValueError("min_dist must be >= 0")
    if min_dist == 0 and skip_if_zero:
        return 1.0, 1.0
    t, target = ab_target(min_dist, spread)
    (a, b), _ = curve_fit(_ab_curve, t, target, p0=(1.0, 1.0), maxfev=10_000)
    return float(a), float(b)


def ab_target(min_dist: float, spread: float = 1.0):
    t = np.linspace(0, 3 * spread, 300)
    target = np.where(t <= min_dist, 1.0, np.exp(-(t - min_dist) / spread))
    return t, target


def low_dim_similarity(yi, yj, a: float, b: float) -> float:
    d2 = float(np.sum((np.asarray(yi, float) - np.asarray(yj, float)) ** 2))
    return 1.0 / (1.0 + a * d2**b)


def similarity_matrix(y: np.ndarray, a: float, b: float) -> np.ndarray:
    diff = y[:, None, :] - y[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return 1.0 / (1.0 + a * d2**b)


CLAMP = 1e-12


def cross_entropy(v, w) -> float:
    """Fuzzy-set cross-entropy between edge weights and similarities.

    ``v`` and ``w`` are either aligned 1D arrays of pair values or square
    matrices, in which case the diagonal is ignored.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if v.ndim == 2:
        off = ~np.eye(v.shape[0], dtype=bool)
        v, w = v[off], w[off]
    v = np.clip(v, CLAMP, 1 - CLAMP)
    w = np.clip(w, CLAMP, 1 - CLAMP)
    return float(np.sum(v * np.log(v / w) + (1 - v) * np.log((1 - v) / (1 - w))))


def ce_gradient(y: np.ndarray, v: np.ndarray, a: float, b: float, eps: float = 0.0):
    """Gradient of :func:`cross_entropy` over all ordered pairs i != j.

    Each unordered pair appears twice in the sum, hence the factor 2. The
    attractive part is weighted by ``v`` and the repulsive part by ``1 - v``;
    ``eps`` guards the repulsive denominator (0 gives the exact gradient).
    """
    diff = y[:, None, :] - y[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, 1.0)
    d2b = d2**b
    # coincident points exert no attraction (the factor d^(2b-1) vanishes)
    safe = np.where(d2 > 0, d2, 1.0)
    attract = np.where(d2 > 0, 2.0 * a * b * d2b / safe, 0.0) / (1.0 + a * d2b) * v
    repulse = 2.0 * b / ((eps + d2) * (1.0 + a * d2b)) * (1.0 - v)
    coeff = attract - repulse
    np.fill_diagonal(coeff, 0.0)
    return 2.0 * np.einsum("ij,ijk->ik", coeff, diff)


def pca_init(data, d: int = 2, scale: float = INIT_STD) -> Projection:
    """Top-``d`` principal components of the centered data.

    Each component is sign-fixed so its largest-magnitude loading is
    positive. The result is scaled uniformly so the leading axis has std
    ``scale``; relative axis scales are preserved.
    """
    x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n, dim = x.shape
    if d > dim:
        raise ValueError(f"cannot take {d} components of {dim}-dimensional data")
    if n < 2:
        raise ValueError("PCA needs at least 2 points")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    comps = evecs[:, order]
    lead = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[lead, np.arange(d)])
    signs[signs == 0] = 1.0
    comps = comps * signs
    y = centered @ comps
    std0 = y[:, 0].std()
    if std0 > 0:
        y = y * (scale / std0)
    return Projection(y)


def random_init(n: int, d: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-RANDOM_INIT_RANGE, RANDOM_INIT_RANGE, size=(n, d))


def _clip4(g):
    return np.clip(g, -4.0, 4.0)


def hub_weight_matrix(hub_points: np.ndarray, k: int) -> np.ndarray:
    """Dense symmetric fuzzy weights among hubs (zero for non-neighbors)."""
    n = hub_points.shape[0]
    k_hub = min(k, n - 1)
    graph = fuzzy_graph(knn_exact(hub_points, k_hub))
    return graph.edges.toarray()


def global_phase(hub_points, weights, init, cfg: EmbedConfig, trace: OptTrace | None = None):
    """Full-gradient cross-entropy descent over every hub pair.

    ``weights`` is the dense hub weight matrix (``None`` to build it from
    ``hub_points``). Per-coordinate gradients are clipped to [-4, 4] and the
    step size decays linearly from ``cfg.lr_global`` to 0.
    """
    y = np.array(init.coords if isinstance(init, Projection) else init, dtype=np.float64)
    if y.shape[0] < 2:
        raise ValueError("global phase needs at least 2 hubs")
    if weights is None:
        weights = hub_weight_matrix(np.asarray(hub_points), cfg.k)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    a, b = cfg.curve()
    for epoch in range(cfg.e_g):
        loss, grad = _layout.ce_and_gradient(y, weights, a, b, cfg.epsilon, CLAMP)
        if not np.isfinite(loss):
            raise OptimizationError(f"global phase: non-finite loss at epoch {epoch}")
        if trace is not None:
            trace.global_loss.append(loss)
        lr = cfg.lr_global * (1.0 - epoch / cfg.e_g)
        y -= lr * _clip4(grad)
    if not np.all(np.isfinite(y)):
        raise OptimizationError("global phase: non-finite coordinates")
    return Projection(y)


def _undirected_neighbors(knn: KnnIndex):
    """Per-point neighbor lists: own row first (nearest first), then points
    whose rows contain it, ordered by distance."""
    reverse = [[] for _ in range(knn.n)]
    for i in range(knn.n):
        for j, dist in zip(knn.indices[i], knn.distances[i]):
            if j >= 0:
                reverse[j].append((dist, i))
    out = []
    for i in range(knn.n):
        own = [int(j) for j in knn.row(i)]
        seen = set(own)
        extra = [j for _, j in sorted(reverse[i]) if j not in seen]
        out.append(own + extra)
    return out


def init_enns(partition: PointClassification, knn: KnnIndex, hub_positions,
              cfg: EmbedConfig, rng=None, noise: bool | None = None) -> np.ndarray:
    """Place eNNs wave by wave outward from the hubs.

    In each wave, every unplaced eNN with at least one placed neighbor goes
    to the mean of up to ``cfg.m_init`` placed neighbors plus Gaussian noise
    with std 1% of the hub layout's bounding-box diagonal. Returns an N x d
    array; DCP rows are left at zero.
    """
    hub_positions = np.asarray(
        hub_positions.coords if isinstance(hub_positions, Projection) else hub_positions
    )
    n = knn.n
    y = np.zeros((n, hub_positions.shape[1]))
    y[partition.hubs] = hub_positions
    placed = np.zeros(n, dtype=bool)
    placed[partition.hubs] = True
    span = hub_positions.max(axis=0) - hub_positions.min(axis=0)
    noise_std = 0.01 * float(np.linalg.norm(span))
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    if noise is None:
        noise = cfg.enn_noise
    neighbors = _undirected_neighbors(knn)
    pending = list(partition.enns)
    while pending:
        wave, deferred = [], []
        for i in pending:
            near = [j for j in neighbors[i] if placed[j]][: cfg.m_init]
            (wave if near else deferred).append((i, near))
        if not wave:
            raise AssertionError(f"{len(deferred)} eNNs are unreachable from the hubs")
        for i, near in wave:
            y[i] = y[near].mean(axis=0)
        if noise and noise_std > 0:
            idx = [i for i, _ in wave]
            y[idx] += rng.normal(0.0, noise_std, size=(len(idx), y.shape[1]))
        for i, _ in wave:
            placed[i] = True
        pending = [i for i, _ in deferred]
    return y


def update_knn_exclude_dcp(knn: KnnIndex, partition: PointClassification,
                           data=None) -> KnnIndex:
    """Remove DCPs from the rows of hubs and eNNs.

    With ``data`` the freed slots are refilled by the next nearest non-DCP
    points (exact search); without it, or when too few non-DCP points exist,
    rows are shortened (padded with -1 / inf). DCP rows are left untouched.
    """
    out = knn.copy()
    if len(partition.dcps) == 0:
        return out
    is_dcp = np.zeros(knn.n, dtype=bool)
    is_dcp[partition.dcps] = True
    hit = knn.valid & is_dcp[np.where(knn.valid, knn.indices, 0)]
    rows = np.flatnonzero(hit.any(axis=1) & ~is_dcp)
    x = None
    if data is not None:
        x = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    keep_pool = np.flatnonzero(~is_dcp)
    for i in rows:
        mask = knn.valid[i] & ~hit[i]
        idx = list(knn.indices[i][mask])
        dist = list(knn.distances[i][mask])
        if x is not None:
            pool = keep_pool[keep_pool != i]
            dd = np.sqrt(((x[pool] - x[i]) ** 2).sum(axis=1))
            have = set(idx)
            for t in np.argsort(dd, kind="stable"):
                if len(idx) >= knn.k:
                    break
                j = int(pool[t])
                if j not in have:
                    idx.append(j)
                    dist.append(dd[t])
        idx = np.array(idx, dtype=np.int64)
        dist = np.array(dist, dtype=np.float64)
        order = np.lexsort((idx, dist))
        out.indices[i] = -1
        out.distances[i] = np.inf
        out.indices[i, : len(idx)] = idx[order]
        out.distances[i, : len(idx)] = dist[order]
    return out


def _edges_from_graph(edges, heads_mask):
    """Directed (i, j, v) entries of a symmetric sparse matrix with i in heads."""
    coo = edges.tocoo()
    keep = heads_mask[coo.row] & (coo.row != coo.col)
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    order = np.lexsort((cols, rows))
    return (rows[order].astype(np.int64), cols[order].astype(np.int64),
            vals[order].astype(np.float64))


def _negative_table(edges, members: np.ndarray):
    """Candidates and probabilities proportional to weighted degree^(3/4)."""
    degree = np.asarray(edges.sum(axis=1)).ravel()[members]
    p = degree**0.75
    if p.sum() <= 0:
        p = np.ones_like(p)
    return members, p / p.sum()


def negative_sgd(y, heads, tails, weights, tail_scale, neg_scale, candidates, probs,
                 cfg: EmbedConfig, n_epochs: int, rng, trace: list | None = None):
    """Shared negative-sampling loop; ``y`` is updated in place.

    Edge e is processed on average ``weights[e]`` times per epoch, so each
    processed edge applies an unweighted step (the expected update matches
    the weight-scaled gradient).
    """
    a, b = cfg.curve()
    keep = weights > 0
    heads, tails, weights = heads[keep], tails[keep], weights[keep]
    epochs_per_sample = 1.0 / weights
    next_sample = epochs_per_sample.copy()
    prob, alias = _layout.alias_table(probs)
    state = np.array([rng.integers(0, 2**63)], dtype=np.uint64)
    for epoch in range(n_epochs):
        lr = cfg.lr_local * (1.0 - epoch / n_epochs)
        loss = _layout.sgd_epoch(
            y, heads, tails, epochs_per_sample, next_sample, epoch,
            candidates, prob, alias, cfg.M, tail_scale, neg_scale,
            a, b, cfg.gamma, cfg.epsilon, lr, state,
        )
        if not np.all(np.isfinite(y)):
            bad = np.flatnonzero(~np.isfinite(y).all(axis=1))[:5]
            raise OptimizationError(
                f"non-finite coordinates at epoch {epoch} (points {bad.tolist()})"
            )
        if trace is not None:
            trace.append(loss)
    return y


def local_phase(data, partition: PointClassification, knn_updated: KnnIndex, init,
                cfg: EmbedConfig, trace: OptTrace | None = None, rng=None) -> Projection:
    """Negative-sampled refinement with eNN-anchored edges.

    Edges are the directed entries (i, j) of the fuzzy graph over hubs and
    eNNs whose head ``i`` is an eNN. A hub tail moves with weight
    ``hub_attract_penalty``; negative samples move with ``repulse_penalty``.
    """
    y = np.array(init.coords if isinstance(init, Projection) else init, dtype=np.float64)
    n = y.shape[0]
    members = np.sort(np.concatenate([partition.hubs, partition.enns])).astype(np.int64)
    is_member = np.zeros(n, dtype=bool)
    is_member[members] = True
    restricted = knn_updated.copy()
    restricted.indices[~is_member] = -1
    restricted.distances[~is_member] = np.inf
    graph = fuzzy_graph(restricted)

    is_enn = np.zeros(n, dtype=bool)
    is_enn[partition.enns] = True
    heads, tails, weights = _edges_from_graph(graph.edges, is_enn)
    tail_scale = np.ones(n)
    tail_scale[partition.hubs] = cfg.hub_attract_penalty
    neg_scale = np.full(n, cfg.repulse_penalty)
    # a hub drawn as a negative sample is damped by both penalties
    neg_scale[partition.hubs] *= cfg.hub_attract_penalty
    candidates, probs = _negative_table(graph.edges, members)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    losses = trace.local_loss if trace is not None else None
    negative_sgd(y, heads, tails, weights, tail_scale, neg_scale, candidates, probs,
                 cfg, cfg.e_l, rng, losses)
    return Projection(y)


def place_dcps(partition: PointClassification, knn_original: KnnIndex, projection):
    """Put each DCP at the centroid of its kNN row members that are not DCPs.

    DCPs whose rows hold only DCPs are resolved afterwards, most-connected
    first, from already placed row members, then from points whose rows
    contain them, and as a last resort at the centroid of all placed points.
    """
    y = np.array(
        projection.coords if isinstance(projection, Projection) else projection,
        dtype=np.float64,
    )
    if len(partition.dcps) == 0:
        return Projection(y)
    n = knn_original.n
    resolved = np.ones(n, dtype=bool)
    resolved[partition.dcps] = False
    base = resolved.copy()

    pending = []
    for i in partition.dcps:
        row = knn_original.row(i)
        near = row[base[row]]
        if len(near):
            y[i] = y[near].mean(axis=0)
        else:
            pending.append(int(i))
    for i in partition.dcps:
        resolved[i] = True
    for i in pending:
        resolved[i] = False

    reverse = None
    while pending:
        counts = [int(resolved[knn_original.row(i)].sum()) for i in pending]
        best = int(np.argmax(counts))  # first max = lowest index (pending is sorted)
        i = pending.pop(best)
        row = knn_original.row(i)
        near = row[resolved[row]]
        if len(near) == 0:
            if reverse is None:
                reverse = _undirected_neighbors(knn_original)
            cand = np.array(reverse[i], dtype=np.int64)
            near = cand[resolved[cand]] if len(cand) else cand
        if len(near) == 0:
            near = np.flatnonzero(resolved)
        y[i] = y[near].mean(axis=0)
        resolved[i] = True
    return Projection(y)


def _hub_init(hub_points: np.ndarray, cfg: EmbedConfig) -> np.ndarray:
    if cfg.init == "random":
        seed = cfg.seed if cfg.init_seed is None else cfg.init_seed
        return random_init(hub_points.shape[0], cfg.d, seed)
    return pca_init(hub_points, cfg.d).coords


def umato(data: Dataset, cfg: EmbedConfig | None = None, knn: KnnIndex | None = None):
    """Two-phase embedding; returns (Projection, PointClassification, OptTrace).

    The caller is responsible for standardizing ``data``.
    """
    cfg = cfg or EmbedConfig()
    x = data.points
    n = x.shape[0]
    if n <= cfg.k:
        raise ValueError(f"need more points than neighbors (N={n}, k={cfg.k})")
    trace = OptTrace()
    rng = np.random.default_rng(cfg.seed)
    clock = time.perf_counter

    t0 = clock()
    if knn is None:
        knn = build_knn(x, cfg.k, cfg.knn_method, seed=cfg.seed)
    t1 = clock()
    trace.timings["knn"] = t1 - t0

    if cfg.n_h >= n:
        partition = PointClassification(
            np.arange(n), np.array([], dtype=np.int64), np.array([], dtype=np.int64), cfg.n_h
        )
    else:
        partition = classify_points(knn, cfg.n_h)
    t2 = clock()
    trace.timings["classify"] = t2 - t1

    hub_points = x[partition.hubs]
    hub_y = _hub_init(hub_points, cfg)
    weights = hub_weight_matrix(hub_points, cfg.k)
    t3 = clock()
    trace.timings["init"] = t3 - t2

    hub_y = global_phase(hub_points, weights, hub_y, cfg, trace).coords
    t4 = clock()
    trace.timings["global"] = t4 - t3

    y = init_enns(partition, knn, hub_y, cfg, rng)
    if len(partition.enns):
        knn_updated = update_knn_exclude_dcp(knn, partition, x)
        y = local_phase(x, partition, knn_updated, y, cfg, trace, rng).coords
    t5 = clock()
    trace.timings["local"] = t5 - t4

    proj = place_dcps(partition, knn, y)
    t6 = clock()
    trace.timings["dcp"] = t6 - t5

    proj.seed = cfg.seed
    proj.config_digest = cfg.digest()
    proj.labels = data.labels
    return proj, partition, trace


def umap_like(data: Dataset, cfg: EmbedConfig | None = None, knn: KnnIndex | None = None,
              trace: OptTrace | None = None) -> Projection:
    """Single-phase negative-sampled baseline over the whole fuzzy graph.

    Starts from PCA (or random) initialization and runs ``5 * e_l`` epochs
    in which both edge endpoints move freely and negative samples stay put.
    """
    cfg = cfg or EmbedConfig()
    x = data.points
    n = x.shape[0]
    if n <= cfg.k:
        raise ValueError(f"need more points than neighbors (N={n}, k={cfg.k})")
    if knn is None:
        knn = build_knn(x, cfg.k, cfg.knn_method, seed=cfg.seed)
    graph = fuzzy_graph(knn)
    if cfg.init == "random":
        y = random_init(n, cfg.d, cfg.seed if cfg.init_seed is None else cfg.init_seed)
    else:
        y = pca_init(x, cfg.d).coords
    heads, tails, weights = _edges_from_graph(graph.edges, np.ones(n, dtype=bool))
    candidates, probs = _negative_table(graph.edges, np.arange(n, dtype=np.int64))
    rng = np.random.default_rng(cfg.seed)
    losses = trace.local_loss if trace is not None else None
    negative_sgd(y, heads, tails, weights, np.ones(n), np.zeros(n), candidates, probs,
                 cfg, 5 * cfg.e_l, rng, losses)
    proj = Projection(y, seed=cfg.seed, config_digest=cfg.digest(), labels=data.labels)
    return proj
