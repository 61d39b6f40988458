"""k-nearest-neighbor indices and fuzzy kNN edge weights.

Rows of a :class:`KnnIndex` may be shorter than ``k`` after points are
filtered out; missing slots hold index ``-1`` and distance ``inf``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse
from scipy.spatial.distance import cdist

from .dataset import Dataset

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3
SIGMA_LOWER = 1e-8
EXACT_MAX_N = 20_000


@dataclass
class KnnIndex:
    indices: np.ndarray  # (N, k) int64, -1 marks an empty slot
    distances: np.ndarray  # (N, k) float64, inf in empty slots
    metric: str = "euclidean"

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.indices >= 0

    def row(self, i: int) -> np.ndarray:
        r = self.indices[i]
        return r[r >= 0]

    def copy(self) -> "KnnIndex":
        return KnnIndex(self.indices.copy(), self.distances.copy(), self.metric)


@dataclass
class FuzzyGraph:
    knn: KnnIndex
    rho: np.ndarray
    sigma: np.ndarray
    directed: np.ndarray  # (N, k) v_{j|i} aligned with knn.indices
    edges: scipy.sparse.csr_matrix  # symmetric v_ij

    def edge_list(self):
        """Return (rows, cols, weights) of the upper triangle, sorted."""
        upper = scipy.sparse.triu(self.edges, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]


def _as_points(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.points
    return np.asarray(data, dtype=np.float64)


def _check_k(n: int, k: int):
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < N (k={k}, N={n})")


def knn_exact(data, k: int, chunk_size: int = 512) -> KnnIndex:
    """Brute-force Euclidean kNN; equal distances are ordered by lower index."""
    x = _as_points(data)
    n = x.shape[0]
    _check_k(n, k)
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        d = cdist(x[start:stop], x)
        rows = np.arange(stop - start)
        d[rows, rows + start] = np.inf
        kth = np.partition(d, k - 1, axis=1)[:, k - 1]
        for r in range(stop - start):
            cand = np.flatnonzero(d[r] <= kth[r])
            cand = cand[np.argsort(d[r, cand], kind="stable")[:k]]
            indices[start + r] = cand
            distances[start + r] = d[r, cand]
    return KnnIndex(indices, distances)


@numba.njit(cache=True)
def _sqdist(x, i, j):
    s = 0.0
    for t in range(x.shape[1]):
        diff = x[i, t] - x[j, t]
        s += diff * diff
    return s


@numba.njit(cache=True)
def _heap_push(dist, idx, flag, i, d, j, is_new):
    """Push j into point i's bounded max-heap; return 1 if it was inserted."""
    if d >= dist[i, 0]:
        return 0
    k = dist.shape[1]
    for t in range(k):
        if idx[i, t] == j:
            return 0
    dist[i, 0] = d
    idx[i, 0] = j
    flag[i, 0] = is_new
    pos = 0
    while True:
        left = 2 * pos + 1
        right = left + 1
        if left >= k:
            break
        child = left
        if right < k and dist[i, right] > dist[i, left]:
            child = right
        if dist[i, child] <= d:
            break
        dist[i, pos] = dist[i, child]
        idx[i, pos] = idx[i, child]
        flag[i, pos] = flag[i, child]
        pos = child
    dist[i, pos] = d
    idx[i, pos] = j
    flag[i, pos] = is_new
    return 1


@numba.njit(cache=True)
def _cand_push(pri, cand, i, p, j):
    """Bounded max-heap on random priority keeping the smallest priorities."""
    m = pri.shape[1]
    if p >= pri[i, 0]:
        return
    for t in range(m):
        if cand[i, t] == j:
            return
    pos = 0
    while True:
        left = 2 * pos + 1
        right = left + 1
        if left >= m:
            break
        child = left
        if right < m and pri[i, right] > pri[i, left]:
            child = right
        if pri[i, child] <= p:
            break
        pri[i, pos] = pri[i, child]
        cand[i, pos] = cand[i, child]
        pos = child
    pri[i, pos] = p
    cand[i, pos] = j


@numba.njit(cache=True)
def _nn_descent_iter(x, dist, idx, flag, priorities, max_cand):
    n, k = idx.shape
    new_pri = np.full((n, max_cand), np.inf)
    new_c = np.full((n, max_cand), -1, dtype=np.int64)
    old_pri = np.full((n, max_cand), np.inf)
    old_c = np.full((n, max_cand), -1, dtype=np.int64)
    for i in range(n):
        for t in range(k):
            j = idx[i, t]
            if j < 0:
                continue
            p = priorities[i, t]
            if flag[i, t]:
                _cand_push(new_pri, new_c, i, p, j)
                _cand_push(new_pri, new_c, j, p, i)
            else:
                _cand_push(old_pri, old_c, i, p, j)
                _cand_push(old_pri, old_c, j, p, i)
    # sampled new entries become old
    for i in range(n):
        for t in range(k):
            j = idx[i, t]
            if j < 0 or not flag[i, t]:
                continue
            for c in range(max_cand):
                if new_c[i, c] == j:
                    flag[i, t] = 0
                    break
    updates = 0
    for i in range(n):
        for a in range(max_cand):
            p = new_c[i, a]
            if p < 0:
                continue
            for b in range(a + 1, max_cand):
                q = new_c[i, b]
                if q < 0:
                    continue
                d = _sqdist(x, p, q)
                updates += _heap_push(dist, idx, flag, p, d, q, 1)
                updates += _heap_push(dist, idx, flag, q, d, p, 1)
            for b in range(max_cand):
                q = old_c[i, b]
                if q < 0 or q == p:
                    continue
                d = _sqdist(x, p, q)
                updates += _heap_push(dist, idx, flag, p, d, q, 1)
                updates += _heap_push(dist, idx, flag, q, d, p, 1)
    return updates


@numba.njit(cache=True)
def _nn_descent_init(x, dist, idx, flag, init):
    n = x.shape[0]
    pushed = 0
    for i in range(n):
        for t in range(init.shape[1]):
            j = init[i, t]
            if j != i:
                pushed += _heap_push(dist, idx, flag, i, _sqdist(x, i, j), j, 1)
    return pushed


def knn_descent(data, k: int, max_iters: int = 20, seed: int = 0,
                max_candidates: int | None = None, delta: float = 0.001,
                patience: int = 3) -> KnnIndex:
    """Approximate kNN by nearest-neighbor descent.

    Starts from random neighbor lists and repeatedly joins neighbors of
    neighbors (forward and reverse) until fewer than ``delta * N * k`` heap
    entries change in an iteration, or ``max_iters`` is reached. On
    convergence all entries are re-marked new, a few random candidates are
    injected and the join runs again; the search stops after ``patience``
    such rounds in a row change nothing.
    """
    x = np.ascontiguousarray(_as_points(data))
    n = x.shape[0]
    _check_k(n, k)
    if max_candidates is None:
        max_candidates = max(k, 30)
    rng = np.random.default_rng(seed)
    dist = np.full((n, k), np.inf)
    idx = np.full((n, k), -1, dtype=np.int64)
    flag = np.zeros((n, k), dtype=np.int8)

    def random_candidates(m):
        draw = rng.integers(0, n - 1, size=(n, m))
        # shift so no draw equals the row itself
        return (draw + (draw >= np.arange(n)[:, None])).astype(np.int64)

    _nn_descent_init(x, dist, idx, flag, random_candidates(2 * k))
    fruitless = 0
    for _ in range(max_iters):
        priorities = rng.random((n, k))
        updates = _nn_descent_iter(x, dist, idx, flag, priorities, max_candidates)
        if updates < delta * n * k:
            # converged: escape local optima by marking every entry new and
            # injecting a few random candidates before sweeping again
            flag[:] = 1
            updates += _nn_descent_init(x, dist, idx, flag, random_candidates(k))
            fruitless = fruitless + 1 if updates == 0 else 0
            if fruitless >= patience:
                break
    return _finalize_heaps(x, idx)


def _finalize_heaps(x, idx) -> KnnIndex:
    n, k = idx.shape
    out_idx = np.full((n, k), -1, dtype=np.int64)
    out_dist = np.full((n, k), np.inf)
    for i in range(n):
        row = idx[i][idx[i] >= 0]
        d = np.sqrt(((x[row] - x[i]) ** 2).sum(axis=1))
        order = np.lexsort((row, d))
        out_idx[i, : len(row)] = row[order]
        out_dist[i, : len(row)] = d[order]
    return KnnIndex(out_idx, out_dist)


def build_knn(data, k: int, method: str = "auto", seed: int = 0) -> KnnIndex:
    """Exact kNN up to 20,000 points, NN-descent above (``method`` overrides)."""
    n = _as_points(data).shape[0]
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "descent"
    if method == "exact":
        return knn_exact(data, k)
    if method == "descent":
        return knn_descent(data, k, seed=seed)
    raise ValueError(f"unknown kNN method {method!r}")


def recall(approx: KnnIndex, exact: KnnIndex) -> float:
    """Fraction of exact neighbor entries recovered by ``approx``."""
    hits = 0
    for i in range(exact.n):
        hits += len(np.intersect1d(approx.row(i), exact.row(i)))
    return hits / exact.valid.sum()


def compute_rho_sigma(knn: KnnIndex, n_iter: int = 64):
    """Per-point nearest-neighbor distance and kernel bandwidth.

    ``rho[i]`` is the smallest strictly positive neighbor distance (0 when
    every neighbor coincides with the point). ``sigma[i]`` solves
    ``sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k_i)`` by bisection,
    where ``k_i`` is the number of occupied slots in row i, and is clamped
    below by ``1e-3`` times the mean row distance.
    """
    d = knn.distances
    valid = knn.valid
    n = knn.n
    counts = valid.sum(axis=1)
    pos = np.where(valid & (d > 0), d, np.inf)
    rho = pos.min(axis=1)
    rho[~np.isfinite(rho)] = 0.0

    dv = np.where(valid, d, 0.0)
    excess = np.maximum(dv - rho[:, None], 0.0)
    target = np.log2(np.maximum(counts, 1))

    def kernel_sum(sig, rows):
        e = np.exp(-excess[rows] / sig[:, None])
        return np.where(valid[rows], e, 0.0).sum(axis=1)

    lo = np.full(n, SIGMA_LOWER)
    row_max = dv.max(axis=1)
    hi = np.where(row_max > 0, row_max * 1024.0, 1.0)
    # widen the bracket until the sum exceeds the target
    for _ in range(64):
        short = kernel_sum(hi, np.arange(n)) <= target
        short &= counts > target  # otherwise unreachable
        if not short.any():
            break
        hi[short] *= 2.0

    sigma = 0.5 * (lo + hi)
    active = np.ones(n, dtype=bool)
    for _ in range(n_iter):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        mid = 0.5 * (lo[rows] + hi[rows])
        s = kernel_sum(mid, rows)
        sigma[rows] = mid
        done = np.abs(s - target[rows]) <= SMOOTH_K_TOLERANCE
        above = s > target[rows]
        hi[rows[above]] = mid[above]
        lo[rows[~above]] = mid[~above]
        active[rows[done]] = False

    total = dv.sum()
    global_mean = total / max(valid.sum(), 1)
    row_mean = dv.sum(axis=1) / np.maximum(counts, 1)
    floor = MIN_K_DIST_SCALE * np.where(row_mean > 0, row_mean, global_mean)
    floor = np.maximum(floor, SIGMA_LOWER)
    sigma = np.maximum(sigma, floor)
    return rho, sigma


def directed_weights(knn: KnnIndex, rho, sigma) -> np.ndarray:
    """v_{j|i} for every occupied kNN slot (0 in empty slots)."""
    d = np.where(knn.valid, knn.distances, 0.0)
    v = np.exp(-np.maximum(d - rho[:, None], 0.0) / sigma[:, None])
    return np.where(knn.valid, v, 0.0)


def symmetrize(n: int, knn: KnnIndex, directed: np.ndarray) -> scipy.sparse.csr_matrix:
    """Fuzzy union v_ij = v_{j|i} + v_{i|j} - v_{j|i} v_{i|j}."""
    valid = knn.valid
    rows = np.repeat(np.arange(n), knn.k)[valid.ravel()]
    cols = knn.indices.ravel()[valid.ravel()]
    vals = directed.ravel()[valid.ravel()]
    p = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    pt = p.T.tocsr()
    prod = p.multiply(pt)
    v = (p + pt - prod).tocsr()
    v.eliminate_zeros()
    v.sort_indices()
    return v


def fuzzy_weights(knn: KnnIndex, rho, sigma) -> FuzzyGraph:
    directed = directed_weights(knn, rho, sigma)
    edges = symmetrize(knn.n, knn, directed)
    return FuzzyGraph(knn, rho, sigma, directed, edges)


def fuzzy_graph(knn: KnnIndex) -> FuzzyGraph:
    rho, sigma = compute_rho_sigma(knn)
    return fuzzy_weights(knn, rho, sigma)


_MISSING = 0xFFFFFFFF


def save_knn_cache(knn: KnnIndex, path) -> None:
    """Binary cache: b"KNN1", little-endian u32 N and k, u32 indices, f64 distances."""
    idx = np.where(knn.valid, knn.indices, _MISSING).astype("<u4")
    with open(path, "wb") as fh:
        fh.write(b"KNN1")
        fh.write(struct.pack("<II", knn.n, knn.k))
        fh.write(idx.tobytes(order="C"))
        fh.write(knn.distances.astype("<f8").tobytes(order="C"))


def load_knn_cache(path) -> KnnIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"KNN1":
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    n, k = struct.unpack("<II", blob[4:12])
    expected = 12 + n * k * 4 + n * k * 8
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(blob)}")
    idx = np.frombuffer(blob, dtype="<u4", count=n * k, offset=12).reshape(n, k)
    dist = np.frombuffer(blob, dtype="<f8", count=n * k, offset=12 + n * k * 4)
    indices = np.where(idx == _MISSING, -1, idx.astype(np.int64))
    return KnnIndex(indices, dist.reshape(n, k).astype(np.float64))
