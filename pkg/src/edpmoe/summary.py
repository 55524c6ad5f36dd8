"""Clustering summaries: posterior similarity matrices and VI point estimates.

VI is measured in nats. For partitions a, b of N items with contingency
counts n_kl, VI(a, b) = (1/N)[sum n_k log n_k + sum n_l log n_l - 2 sum n_kl log n_kl].
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from edpmoe.model import NestedPartition, recount

__all__ = ['vi_distance', 'expected_vi', 'psm', 'psm_y', 'psm_x', 'PointEstimate',
           'vi_point_estimate', 'vi_estimate_flat']


def _canon(labels):
    # order-of-appearance relabelling to 0..k-1
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.shape[0], dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.shape[0])
    return rank[inv.ravel()]


def _xlogx(n):
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    pos = n > 0
    out[pos] = n[pos] * np.log(n[pos])
    return out


def vi_distance(a, b):
    """Variation of information between two flat label vectors (nats)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError('partitions must be label vectors of equal length')
    N = a.shape[0]
    if N == 0:
        return 0.0
    a = _canon(a)
    b = _canon(b)
    tab = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(tab, (a, b), 1.0)
    v = (_xlogx(tab.sum(1)).sum() + _xlogx(tab.sum(0)).sum() - 2.0 * _xlogx(tab).sum()) / N
    return max(float(v), 0.0)


def _label_matrix(partitions):
    Z = np.array([_canon(np.asarray(p)) for p in partitions], dtype=np.int64)
    if Z.ndim != 2:
        raise ValueError('all partitions must have the same length')
    return Z


def _vi_to_all(c, Z, hz=None, base=None):
    """VI between label vector ``c`` and every row of ``Z`` (vectorised).

    ``base`` may hold ``Z + L * row index`` precomputed for repeated calls.
    """
    M, N = Z.shape
    K = int(c.max()) + 1
    L = int(Z.max()) + 1
    if hz is None:
        hz = _row_entropy_term(Z)
    if base is None:
        base = Z + L * np.arange(M)[:, None]
    lut = _xlogx(np.arange(N + 1))
    tab = np.bincount((base * K + c[None, :]).ravel(), minlength=M * L * K)
    hc = lut[np.bincount(c, minlength=K)].sum()
    v = (hc + hz - 2.0 * lut[tab].reshape(M, -1).sum(axis=1)) / N
    return np.maximum(v, 0.0)


def _row_entropy_term(Z):
    M, N = Z.shape
    L = int(Z.max()) + 1
    cnt = np.bincount((np.arange(M)[:, None] * L + Z).ravel(), minlength=M * L).reshape(M, L)
    return _xlogx(cnt).sum(axis=1)


def expected_vi(c, partitions):
    """Average VI between ``c`` and a collection of sampled partitions."""
    Z = partitions if isinstance(partitions, np.ndarray) and partitions.ndim == 2 else _label_matrix(partitions)
    return float(np.mean(_vi_to_all(_canon(np.asarray(c)), Z)))


def _greedy(c, Z, max_passes=10):
    """Single-item moves that lower the expected VI, until none helps.

    Contingency tables against every sample are updated in place; one empty
    label slot is kept so that an item can also open a new cluster.
    """
    M, N = Z.shape
    c = _canon(c).copy()
    L = int(Z.max()) + 1
    rows = np.arange(M)

    def build(cap):
        code = (rows[:, None] * cap + c[None, :]) * L + Z
        return np.bincount(code.ravel(), minlength=M * cap * L).reshape(M, cap, L).astype(float)

    cap = int(c.max()) + 2
    tab = build(cap)
    nk = np.bincount(c, minlength=cap).astype(float)
    for _ in range(max_passes):
        improved = False
        for i in range(N):
            a = c[i]
            zi = Z[:, i]
            # change of N * (expected VI) when i moves from a to k
            base_k = _xlogx(nk[a] - 1) - _xlogx(nk[a])
            base_t = _xlogx(tab[rows, a, zi] - 1) - _xlogx(tab[rows, a, zi])
            empty = np.flatnonzero(nk == 0)
            best, best_k = -1e-12, None
            for k in range(cap):
                if k == a or (nk[k] == 0 and (k != empty[0] or nk[a] == 1)):
                    continue
                dk = base_k + _xlogx(nk[k] + 1) - _xlogx(nk[k])
                t = tab[rows, k, zi]
                delta = dk - 2.0 * float(np.mean(base_t + _xlogx(t + 1) - _xlogx(t)))
                if delta < best:
                    best, best_k = delta, k
            if best_k is None:
                continue
            tab[rows, a, zi] -= 1
            tab[rows, best_k, zi] += 1
            nk[a] -= 1
            nk[best_k] += 1
            c[i] = best_k
            improved = True
            if not np.any(nk == 0):
                cap += 1
                tab = build(cap)
                nk = np.bincount(c, minlength=cap).astype(float)
        if not improved:
            break
    return _canon(c)


def vi_estimate_flat(partitions, refine=False, level=0.95):
    """VI-optimal partition among the sampled ones.

    Returns (labels, expected VI, ball size), with ball size the largest VI
    from the estimate among the closest ``level`` fraction of samples.
    """
    Z = _label_matrix(partitions)
    M = Z.shape[0]
    hz = _row_entropy_term(Z)
    base = Z + (int(Z.max()) + 1) * np.arange(M)[:, None]
    uniq, first = np.unique(Z, axis=0, return_index=True)
    best, best_v = None, np.inf
    for r in np.sort(first):
        v = float(np.mean(_vi_to_all(Z[r], Z, hz, base)))
        if v < best_v - 1e-12:
            best, best_v = Z[r], v
    if refine:
        cand = _greedy(best, Z)
        v = float(np.mean(_vi_to_all(cand, Z, hz)))
        if v < best_v:
            best, best_v = cand, v
    d = np.sort(_vi_to_all(best, Z, hz))
    ball = float(d[max(int(np.ceil(level * M)) - 1, 0)])
    return best.copy(), best_v, ball


def _partitions_of(draws):
    if hasattr(draws, 'partitions'):
        return draws.partitions()
    return list(draws)


def psm_y(draws):
    """Co-clustering frequency of the y-level allocations."""
    parts = _partitions_of(draws)
    if not parts:
        raise ValueError('no draws')
    Z = np.array([p.zy for p in parts])
    N = Z.shape[1]
    out = np.zeros((N, N))
    for z in Z:
        out += z[:, None] == z[None, :]
    return out / Z.shape[0]


def psm_x(draws, members):
    """Joint (y, x) co-clustering frequency among the given members."""
    parts = _partitions_of(draws)
    if not parts:
        raise ValueError('no draws')
    members = np.asarray(members, dtype=int)
    out = np.zeros((members.shape[0], members.shape[0]))
    for p in parts:
        zy = p.zy[members]
        zx = p.zx[members]
        out += (zy[:, None] == zy[None, :]) & (zx[:, None] == zx[None, :])
    return out / len(parts)


def psm(draws, level='y', members=None):
    if level == 'y':
        return psm_y(draws)
    if level == 'x':
        if members is None:
            raise ValueError('the x-level similarity needs the members of an estimated y-cluster')
        return psm_x(draws, members)
    raise ValueError(f'unknown level {level!r}')


@dataclass
class PointEstimate:
    """VI point estimate of the nested partition.

    ``partition.zx`` is 0-based within each estimated y-cluster; ``x_ball``
    and ``x_expected_vi`` are keyed by y-cluster.
    """
    partition: NestedPartition
    expected_vi: float
    ball_size: float
    x_expected_vi: Dict[int, float]
    x_ball: Dict[int, float]

    @property
    def k(self):
        return self.partition.k

    @property
    def kj(self):
        return self.partition.kj()

    def to_dict(self):
        return {'zy': self.partition.zy.tolist(), 'zx': self.partition.zx.tolist(),
                'k': int(self.k), 'kj': self.kj.tolist(),
                'expected_vi': self.expected_vi, 'ball_size': self.ball_size,
                'x_expected_vi': {str(k): v for k, v in self.x_expected_vi.items()},
                'x_ball': {str(k): v for k, v in self.x_ball.items()}}


def vi_point_estimate(draws, refine=False, level=0.95, dp=None):
    """Estimate the y-partition, then the x-partition nested in each estimated y-cluster.

    For DP draws (``dp=True``, or ``draws.mode == 'dp'``) there is no x-level and
    every estimated y-cluster gets a single x-cluster.
    """
    parts = _partitions_of(draws)
    if not parts:
        raise ValueError('no draws')
    if dp is None:
        dp = getattr(draws, 'mode', 'edp') == 'dp'
    zy, ev, ball = vi_estimate_flat([p.zy for p in parts], refine, level)
    N = zy.shape[0]
    zx = np.zeros(N, dtype=np.int64)
    xev, xball = {}, {}
    for j in range(zy.max() + 1):
        if dp:
            xev[j], xball[j] = 0.0, 0.0
            continue
        idx = np.flatnonzero(zy == j)
        # induced partition of the members: joint (y, x) labels in each draw
        induced = [p.zy[idx] * (N + 1) + p.zx[idx] for p in parts]
        lab, v, b = vi_estimate_flat(induced, refine, level)
        zx[idx] = lab
        xev[j] = v
        xball[j] = b
    return PointEstimate(recount(NestedPartition(zy, zx)), ev, ball, xev, xball)
