"""Hub / expanded-nearest-neighbor / disconnected-point partition."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .neighbors import KnnIndex

HUB, ENN, DCP = 0, 1, 2
CLASS_NAMES = {HUB: "hub", ENN: "enn", DCP: "dcp"}


@dataclass
class PointClassification:
    hubs: np.ndarray  # in selection order
    enns: np.ndarray  # sorted
    dcps: np.ndarray  # sorted
    n_h: int

    @property
    def n(self) -> int:
        return len(self.hubs) + len(self.enns) + len(self.dcps)

    def labels(self) -> np.ndarray:
        """Per-point class code (HUB, ENN or DCP)."""
        out = np.empty(self.n, dtype=np.int64)
        out[self.hubs] = HUB
        out[self.enns] = ENN
        out[self.dcps] = DCP
        return out

    def to_rows(self):
        """(index, class name, hub selection rank or -1) for every point."""
        rank = np.full(self.n, -1, dtype=np.int64)
        rank[self.hubs] = np.arange(len(self.hubs))
        codes = self.labels()
        return [(i, CLASS_NAMES[int(codes[i])], int(rank[i])) for i in range(self.n)]


def knn_frequency(knn: KnnIndex) -> list[tuple[int, int]]:
    """How often each point occurs in the kNN rows, most frequent first.

    Ties are broken by ascending point index.
    """
    counts = np.bincount(knn.indices[knn.valid], minlength=knn.n)
    order = np.lexsort((np.arange(knn.n), -counts))
    return [(int(i), int(counts[i])) for i in order]


def select_hubs(knn: KnnIndex, n_h: int) -> np.ndarray:
    """Greedy hub picking: take the most frequent pooled point, then drop it
    and its kNN row from the pool. Stops early if the pool empties."""
    in_pool = np.ones(knn.n, dtype=bool)
    hubs = []
    for i, _ in knn_frequency(knn):
        if len(hubs) >= n_h:
            break
        if not in_pool[i]:
            continue
        hubs.append(i)
        in_pool[i] = False
        in_pool[knn.row(i)] = False
    return np.array(hubs, dtype=np.int64)


def expand(knn: KnnIndex, hubs: np.ndarray) -> np.ndarray:
    """Boolean mask of points reachable from ``hubs`` along directed kNN rows."""
    reached = np.zeros(knn.n, dtype=bool)
    reached[hubs] = True
    queue = deque(int(h) for h in hubs)
    while queue:
        i = queue.popleft()
        for j in knn.row(i):
            if not reached[j]:
                reached[j] = True
                queue.append(int(j))
    return reached


def classify_points(knn: KnnIndex, n_h: int) -> PointClassification:
    if not 1 <= n_h <= knn.n:
        raise ValueError(f"n_h must be in [1, {knn.n}], got {n_h}")
    hubs = select_hubs(knn, n_h)
    if len(hubs) < n_h:
        warnings.warn(
            f"candidate pool exhausted after {len(hubs)} of {n_h} requested hubs",
            stacklevel=2,
        )
    reached = expand(knn, hubs)
    is_hub = np.zeros(knn.n, dtype=bool)
    is_hub[hubs] = True
    enns = np.flatnonzero(reached & ~is_hub)
    dcps = np.flatnonzero(~reached)
    return PointClassification(hubs, enns, dcps, n_h)
