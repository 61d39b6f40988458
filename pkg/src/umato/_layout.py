"""Numba kernels for the negative-sampled layout optimization.

Randomness inside the kernels comes from a splitmix64 stream whose state is
seeded from the caller's numpy Generator, so runs are reproducible.
"""

import numba
import numpy as np

SCHEDULE_SLACK = 1e-9


@numba.njit(inline="always")
def _clip(val):
    if val > 4.0:
        return 4.0
    if val < -4.0:
        return -4.0
    return val


@numba.njit(inline="always")
def _next(state):
    z = state[0] + np.uint64(0x9E3779B97F4A7C15)
    state[0] = z
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _uniform(state):
    return np.float64(_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(inline="always")
def _below(state, n):
    return np.int64(_uniform(state) * n)


def alias_table(probs: np.ndarray):
    """Walker/Vose alias table for O(1) sampling from ``probs``."""
    n = len(probs)
    scaled = np.asarray(probs, dtype=np.float64) * n / np.sum(probs)
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, g = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    return prob, alias


@numba.njit(inline="always")
def _draw(state, prob, alias):
    i = _below(state, prob.shape[0])
    if _uniform(state) < prob[i]:
        return i
    return alias[i]


@numba.njit(fastmath=True, cache=True)
def sgd_epoch(
    y,
    heads,
    tails,
    epochs_per_sample,
    next_sample,
    epoch,
    candidates,
    cand_prob,
    cand_alias,
    n_neg,
    tail_scale,
    neg_scale,
    a,
    b,
    gamma,
    eps,
    lr,
    state,
):
    """One epoch over the edges due at ``epoch``; returns the sampled loss.

    Edge e is due whenever ``next_sample[e] <= epoch + 1`` (up to a 1e-9
    slack so rounding in the weights cannot shift the schedule), which processes
    it at a rate of ``1 / epochs_per_sample[e]`` per epoch. Due edges are
    visited in a fresh random order. For edge (i, j) the head ``i`` takes
    the full attractive step and the tail ``j`` the opposite step times
    ``tail_scale[j]``. Each of ``n_neg`` points ``s`` drawn from the
    candidate distribution repels ``i`` with weight ``gamma`` and is pushed
    back by ``neg_scale[s]`` times that step. The returned loss is the
    negated sampled objective (lower is better).
    """
    dim = y.shape[1]
    n_edges = heads.shape[0]
    order = np.arange(n_edges)
    for t in range(n_edges - 1, 0, -1):
        r = _below(state, t + 1)
        tmp = order[t]
        order[t] = order[r]
        order[r] = tmp

    loss = 0.0
    for t in range(n_edges):
        e = order[t]
        if next_sample[e] > epoch + 1 + SCHEDULE_SLACK:
            continue
        next_sample[e] += epochs_per_sample[e]
        i = heads[e]
        j = tails[e]

        d2 = 0.0
        for c in range(dim):
            diff = y[i, c] - y[j, c]
            d2 += diff * diff
        coeff = 0.0
        if d2 > 0.0:
            d2b = d2**b
            coeff = -2.0 * a * b * d2b / (d2 * (1.0 + a * d2b))
            loss += np.log(1.0 + a * d2b)
        ts = tail_scale[j]
        for c in range(dim):
            g = _clip(coeff * (y[i, c] - y[j, c]))
            y[i, c] += lr * g
            y[j, c] -= lr * ts * g

        for m in range(n_neg):
            s = candidates[_draw(state, cand_prob, cand_alias)]
            if s == i:
                continue
            d2 = 0.0
            for c in range(dim):
                diff = y[i, c] - y[s, c]
                d2 += diff * diff
            ns = neg_scale[s]
            if d2 > 0.0:
                d2b = d2**b
                w = 1.0 / (1.0 + a * d2b)
                loss -= gamma * np.log(max(1.0 - w, 1e-12))
                coeff = 2.0 * gamma * b / ((eps + d2) * (1.0 + a * d2b))
                for c in range(dim):
                    g = _clip(coeff * (y[i, c] - y[s, c]))
                    y[i, c] += lr * g
                    y[s, c] -= lr * ns * g
            else:
                loss -= gamma * np.log(1e-12)
                for c in range(dim):
                    y[i, c] += lr * 4.0
                    y[s, c] -= lr * ns * 4.0
    return loss




@numba.njit(cache=True)
def _xlogx_ratio(p, q):
    return p * np.log(p / q)


@numba.njit(cache=True)
def ce_and_gradient(y, v, a, b, eps, clamp):
    """Exact cross-entropy over all ordered pairs and its gradient.

    The loss uses probabilities clamped to [clamp, 1 - clamp]; the gradient
    is unclamped. Accumulation order is fixed, so results are reproducible.
    """
    n, dim = y.shape
    grad = np.zeros((n, dim))
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d2 = 0.0
            for c in range(dim):
                diff = y[i, c] - y[j, c]
                d2 += diff * diff
            d2b = d2**b
            denom = 1.0 + a * d2b
            vij = v[i, j]
            w = min(max(1.0 / denom, clamp), 1.0 - clamp)
            p = min(max(vij, clamp), 1.0 - clamp)
            total += _xlogx_ratio(p, w) + _xlogx_ratio(1.0 - p, 1.0 - w)
            coeff = -2.0 * b * (1.0 - vij) / ((eps + d2) * denom)
            if d2 > 0.0:
                coeff += 2.0 * a * b * d2b / d2 / denom * vij
            coeff *= 2.0
            for c in range(dim):
                g = coeff * (y[i, c] - y[j, c])
                grad[i, c] += g
                grad[j, c] -= g
    return 2.0 * total, grad
