"""Slow, loop-based reference implementations used to cross-check the
vectorized code. They share no helpers with the package."""

import math

import numpy as np


def euclid(p, q):
    return math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(p, q)))


def dist_matrix(x):
    n = len(x)
    return [[euclid(x[i], x[j]) for j in range(n)] for i in range(n)]


def ranks(x):
    """rank[i][j]: 1-based position of j among i's neighbors (ties by index)."""
    d = dist_matrix(x)
    n = len(x)
    out = [[0] * n for _ in range(n)]
    for i in range(n):
        order = sorted((j for j in range(n) if j != i), key=lambda j: (d[i][j], j))
        for pos, j in enumerate(order, start=1):
            out[i][j] = pos
    return out


def knn_sets(r, k):
    n = len(r)
    return [{j for j in range(n) if j != i and r[i][j] <= k} for i in range(n)]


def trust_cont(x, y, k):
    n = len(x)
    rx, ry = ranks(x), ranks(y)
    nx, ny = knn_sets(rx, k), knn_sets(ry, k)
    t = c = 0.0
    for i in range(n):
        for j in ny[i] - nx[i]:
            t += rx[i][j] - k
        for j in nx[i] - ny[i]:
            c += ry[i][j] - k
    norm = 2.0 / (n * k * (2 * n - 3 * k - 1))
    return 1 - norm * t, 1 - norm * c


def mrre(x, y, k):
    n = len(x)
    rx, ry = ranks(x), ranks(y)
    c = n * sum(abs(n - 2 * l + 1) / l for l in range(1, k + 1))
    ef = em = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            if ry[i][j] <= k:
                ef += abs(rx[i][j] - ry[i][j]) / ry[i][j]
            if rx[i][j] <= k:
                em += abs(rx[i][j] - ry[i][j]) / rx[i][j]
    return 1 - ef / c, 1 - em / c


def _density(x, sigma):
    d = dist_matrix(x)
    n = len(x)
    dmax = max(max(row) for row in d)
    rho = []
    for i in range(n):
        s = 0.0
        for j in range(n):
            if j != i:
                s += math.exp(-((d[i][j] / dmax) ** 2) / sigma)
        rho.append(s)
    total = sum(rho)
    return [r / total for r in rho]


def kl_dtm(x, y, sigma):
    p, q = _density(x, sigma), _density(y, sigma)
    kl = sum(a * math.log(a / b) for a, b in zip(p, q))
    dtm = math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))
    return kl, dtm


def stress(x, y):
    dx, dy = dist_matrix(x), dist_matrix(y)
    n = len(x)
    num = den = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            num += (dx[i][j] - dy[i][j]) ** 2
            den += dx[i][j] ** 2
    return math.sqrt(num / den)


def _normalized(p):
    p = [list(map(float, r)) for r in p]
    n = len(p)
    mean = [sum(r[c] for r in p) / n for c in range(2)]
    p = [[r[0] - mean[0], r[1] - mean[1]] for r in p]
    norm = math.sqrt(sum(r[0] ** 2 + r[1] ** 2 for r in p))
    return [[r[0] / norm, r[1] / norm] for r in p]


def _residual(a, b, theta, reflect):
    c, s = math.cos(theta), math.sin(theta)
    total = 0.0
    for (ax, ay), (bx, by) in zip(a, b):
        if reflect:
            ay = -ay
        rx, ry = c * ax - s * ay, s * ax + c * ay
        total += (rx - bx) ** 2 + (ry - by) ** 2
    return math.sqrt(total)


def procrustes_2d(pa, pb, n_angles=3600):
    """Best residual over rotations (and reflections) of 2D point sets.

    The closed-form angle is checked against an exhaustive angle grid; the
    returned value is the closed-form optimum.
    """
    a, b = _normalized(pa), _normalized(pb)
    best = math.inf
    for reflect in (False, True):
        aa = [[x, -y] if reflect else [x, y] for x, y in a]
        cross = sum(ax * by - ay * bx for (ax, ay), (bx, by) in zip(aa, b))
        dot = sum(ax * bx + ay * by for (ax, ay), (bx, by) in zip(aa, b))
        theta = math.atan2(cross, dot)
        r = _residual(a, b, theta, reflect)
        grid = min(_residual(a, b, 2 * math.pi * t / n_angles, reflect) for t in range(n_angles))
        assert r <= grid + 1e-12, "closed-form angle beaten by grid search"
        best = min(best, r)
    return best


def cross_entropy(v, w, clamp=1e-12):
    n = len(v)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            p = min(max(v[i][j], clamp), 1 - clamp)
            q = min(max(w[i][j], clamp), 1 - clamp)
            total += p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))
    return total


def similarity(y, a, b):
    n = len(y)
    return [[1.0 / (1.0 + a * euclid(y[i], y[j]) ** (2 * b)) for j in range(n)] for i in range(n)]


def exact_knn(x, k):
    """Indices of the k nearest other points per row, ties by index."""
    d = dist_matrix(x)
    return [sorted((j for j in range(len(x)) if j != i), key=lambda j: (d[i][j], j))[:k]
            for i in range(len(x))]


def closure(rows, seeds):
    """Fixed point of 'reached points pull in their kNN rows'."""
    reached = set(int(s) for s in seeds)
    changed = True
    while changed:
        changed = False
        for i in list(reached):
            for j in rows[i]:
                if j >= 0 and j not in reached:
                    reached.add(int(j))
                    changed = True
    return reached
