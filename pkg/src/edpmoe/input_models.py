"""Conjugate input models: marginal, predictive and joint marginal likelihoods.

Every input dimension carries one of three families (normal with NIG prior,
categorical with Dirichlet prior, binomial with beta prior). Dimensions are
independent given the cluster, so all likelihoods are products over d and are
computed here as sums of logs.
"""
import math

import numpy as np
from scipy.special import gammaln

from edpmoe.model import BinomialBeta, CategoricalDirichlet, GaussianNIG

__all__ = ['SuffStats', 'InputModel']

_LOG_PI = math.log(math.pi)
_LOG_2PI = math.log(2.0 * math.pi)


class SuffStats(object):
    """Sufficient statistics of one x-cluster.

    ``s1`` and ``s2`` hold per-dimension sums of x and x^2 (s2 is only read for
    normal dimensions, whose values are first centred at the prior location u0
    so that the sums stay well conditioned), ``cnt`` maps each categorical dimension to its category
    counts and ``lbc`` accumulates sum_n log C(G_d, x_nd) per binomial dimension.
    """

    __slots__ = ('n', 's1', 's2', 'cnt', 'lbc', 'pred')

    def __init__(self, D, cat_sizes=None):
        # ``pred`` caches the Student-t predictive of the normal dimensions
        self.pred = None
        self.n = 0
        self.s1 = np.zeros(D)
        self.s2 = np.zeros(D)
        self.cnt = {d: np.zeros(g, dtype=np.int64) for d, g in (cat_sizes or {}).items()}
        self.lbc = np.zeros(D)

    def copy(self):
        out = SuffStats.__new__(SuffStats)
        out.pred = self.pred
        out.n = self.n
        out.s1 = self.s1.copy()
        out.s2 = self.s2.copy()
        out.cnt = {d: c.copy() for d, c in self.cnt.items()}
        out.lbc = self.lbc.copy()
        return out

    def __eq__(self, other):
        return (self.n == other.n and np.array_equal(self.s1, other.s1)
                and np.array_equal(self.s2, other.s2) and np.array_equal(self.lbc, other.lbc)
                and all(np.array_equal(self.cnt[d], other.cnt[d]) for d in self.cnt))

    def __repr__(self):
        return f'SuffStats(n={self.n}, s1={self.s1}, s2={self.s2}, cnt={self.cnt})'


def _log_t(x, loc, scale2, df):
    z = (x - loc) ** 2 / (df * scale2)
    return (gammaln(0.5 * (df + 1.0)) - gammaln(0.5 * df)
            - 0.5 * (np.log(df * scale2) + _LOG_PI) - 0.5 * (df + 1.0) * np.log1p(z))


class InputModel(object):
    """Likelihoods for a full input specification (one family per dimension)."""

    def __init__(self, spec):
        self.spec = list(spec)
        self.D = len(self.spec)
        self.nig = np.array([d for d, s in enumerate(self.spec) if isinstance(s, GaussianNIG)], dtype=int)
        self.cat = [d for d, s in enumerate(self.spec) if isinstance(s, CategoricalDirichlet)]
        self.bin = np.array([d for d, s in enumerate(self.spec) if isinstance(s, BinomialBeta)], dtype=int)
        if len(self.nig) + len(self.cat) + len(self.bin) != self.D:
            raise TypeError('unsupported input family in spec')
        sp = [self.spec[d] for d in self.nig]
        self.u0 = np.array([s.u0 for s in sp])
        self.c = np.array([s.c for s in sp])
        self.a = np.array([s.a for s in sp])
        self.b = np.array([s.b for s in sp])
        self.shift = np.zeros(self.D)
        self.shift[self.nig] = self.u0
        self.cat_gamma = {d: np.asarray(self.spec[d].gamma, dtype=float) for d in self.cat}
        self.cat_sizes = {d: len(g) for d, g in self.cat_gamma.items()}
        bp = [self.spec[d] for d in self.bin]
        self.G = np.array([s.G for s in bp], dtype=float)
        self.g0 = np.array([s.gamma0 for s in bp])
        self.g1 = np.array([s.gamma1 for s in bp])

    # -- statistics ---------------------------------------------------------

    def empty_stats(self):
        return SuffStats(self.D, self.cat_sizes)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.D,):
            raise ValueError(f'expected input of length {self.D}, got shape {x.shape}')
        for d in self.cat:
            v = x[d]
            if v != int(v) or not 0 <= v < self.cat_sizes[d]:
                raise ValueError(f'invalid category code {v} for dimension {d}')
        for i, d in enumerate(self.bin):
            v = x[d]
            if v != int(v) or not 0 <= v <= self.G[i]:
                raise ValueError(f'invalid binomial count {v} for dimension {d}')
        return x

    def _lbc(self, x):
        xb = x[self.bin]
        return gammaln(self.G + 1) - gammaln(xb + 1) - gammaln(self.G - xb + 1)

    def add(self, stats, x):
        stats.pred = None
        stats.n += 1
        x = x - self.shift
        stats.s1 += x
        stats.s2 += x * x
        for d in self.cat:
            stats.cnt[d][int(x[d])] += 1
        if len(self.bin):
            stats.lbc[self.bin] += self._lbc(x)
        return stats

    def remove(self, stats, x):
        if stats.n < 1:
            raise RuntimeError('cannot remove a point from empty statistics')
        stats.pred = None
        stats.n -= 1
        if stats.n == 0:
            # reset exactly so that floating-point residue cannot accumulate
            stats.s1[:] = 0.0
            stats.s2[:] = 0.0
            for d in self.cat:
                stats.cnt[d][:] = 0
            stats.lbc[:] = 0.0
            return stats
        for d in self.cat:
            stats.cnt[d][int(x[d])] -= 1
        xs = x - self.shift
        stats.s1 -= xs
        stats.s2 -= xs * xs
        if len(self.bin):
            stats.lbc[self.bin] -= self._lbc(x)
        return stats

    def stats_of(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        st = self.empty_stats()
        if X.shape[0] == 0:
            return st
        st.n = X.shape[0]
        st.pred = None
        Xs = X - self.shift
        st.s1 = Xs.sum(axis=0)
        st.s2 = (Xs * Xs).sum(axis=0)
        for d in self.cat:
            st.cnt[d] = np.bincount(X[:, d].astype(int), minlength=self.cat_sizes[d]).astype(np.int64)
        if len(self.bin):
            st.lbc[self.bin] = np.sum([self._lbc(x) for x in X], axis=0)
        return st

    # -- NIG pieces ---------------------------------------------------------

    def _nig_post(self, n, s1, s2):
        """Posterior (u, c, a, b) per normal dimension given counts and sums.

        ``s1``, ``s2`` are sums of x - u0 and its square, so the prior location
        is zero in these coordinates and is added back to the returned u.
        """
        c_hat = self.c + n
        a_hat = self.a + 0.5 * n
        m = s1 / c_hat
        b_hat = self.b + 0.5 * (s2 - c_hat * m * m)
        # b_hat >= b in exact arithmetic; anything below signals cancellation
        ok = b_hat >= self.b
        if not np.all(ok):
            nn = np.maximum(np.asarray(n, dtype=float), 1.0)
            xbar = s1 / nn
            ss = np.maximum(s2 - nn * xbar ** 2, 0.0)
            alt = self.b + 0.5 * ss + 0.5 * (self.c * n / c_hat) * xbar ** 2
            b_hat = np.where(ok, b_hat, alt)
        return self.u0 + m, c_hat, a_hat, b_hat

    def _t_params(self, stats):
        """(loc, 1/(df scale2), (df+1)/2, summed constant) of the normal-dimension predictive."""
        if stats.pred is None:
            if stats.n == 0:
                u, c, a, b = self.u0, self.c, self.a, self.b
            else:
                u, c, a, b = self._nig_post(stats.n, stats.s1[self.nig], stats.s2[self.nig])
            df = 2.0 * a
            ds = df * b / a * (c + 1.0) / c
            hw = 0.5 * (df + 1.0)
            const = float(np.sum(gammaln(hw) - gammaln(0.5 * df) - 0.5 * (np.log(ds) + _LOG_PI)))
            stats.pred = (u, 1.0 / ds, hw, const)
        return stats.pred

    # -- per-dimension log densities ----------------------------------------

    def log_predictive_dims(self, x, stats=None):
        """Per-dimension log h(x_d | stats); ``stats=None`` gives the prior marginal."""
        return self.log_predictive_rows(np.asarray(x, dtype=float)[None, :], stats)[0]

    def log_predictive_rows(self, Xs, stats=None):
        """Per-dimension log predictive for each row of ``Xs``; returns shape (T, D)."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        out = np.empty(Xs.shape)
        n = 0 if stats is None else stats.n
        if len(self.nig):
            if n == 0:
                u, c, a, b = self.u0, self.c, self.a, self.b
            else:
                u, c, a, b = self._nig_post(n, stats.s1[self.nig], stats.s2[self.nig])
            out[:, self.nig] = _log_t(Xs[:, self.nig], u, b / a * (c + 1.0) / c, 2.0 * a)
        for d in self.cat:
            g = self.cat_gamma[d]
            k = Xs[:, d].astype(int)
            cnt = 0 if n == 0 else stats.cnt[d][k]
            out[:, d] = np.log((g[k] + cnt) / (g.sum() + n))
        if len(self.bin):
            xb = Xs[:, self.bin]
            s1 = 0.0 if n == 0 else stats.s1[self.bin]
            g0 = self.g0 + s1
            g1 = self.g1 + n * self.G - s1
            G = self.G
            out[:, self.bin] = (gammaln(G + 1) - gammaln(xb + 1) - gammaln(G - xb + 1)
                                + gammaln(g0 + g1) - gammaln(g0) - gammaln(g1)
                                + gammaln(g0 + xb) + gammaln(g1 + G - xb) - gammaln(g0 + g1 + G))
        return out

    def log_marginal_point(self, x):
        return float(np.sum(self.log_predictive_dims(self._check(x))))

    def log_predictive_point(self, x, stats):
        return float(np.sum(self.log_predictive_dims(self._check(x), stats)))

    def log_predictive_many(self, x, stats_list):
        """log h(x | X_l) for a list of clusters at once."""
        K = len(stats_list)
        if K == 0:
            return np.empty(0)
        x = np.asarray(x, dtype=float)
        out = np.zeros(K)
        ns = np.array([s.n for s in stats_list], dtype=float)
        if len(self.nig):
            xn = x[self.nig]
            for i, st in enumerate(stats_list):
                u, inv, hw, const = self._t_params(st)
                z = xn - u
                out[i] = const - float(hw @ np.log1p(z * z * inv))
        for d in self.cat:
            g = self.cat_gamma[d]
            k = int(x[d])
            cnt = np.array([s.cnt[d][k] for s in stats_list], dtype=float)
            out += np.log((g[k] + cnt) / (g.sum() + ns))
        if len(self.bin):
            s1 = np.array([s.s1[self.bin] for s in stats_list])
            xb = x[self.bin]
            G = self.G
            g0 = self.g0 + s1
            g1 = self.g1 + ns[:, None] * G - s1
            out += np.sum(gammaln(G + 1) - gammaln(xb + 1) - gammaln(G - xb + 1)
                          + gammaln(g0 + g1) - gammaln(g0) - gammaln(g1)
                          + gammaln(g0 + xb) + gammaln(g1 + G - xb) - gammaln(g0 + g1 + G), axis=1)
        return out

    def log_predictive_loo(self, X, stats, inside):
        """log h(x_m | stats without x_m) for every row m of ``X``.

        Rows flagged in ``inside`` are assumed to be counted in ``stats`` and are
        removed before conditioning; the other rows condition on ``stats`` as is.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w = inside.astype(float)
        n = stats.n - w
        empty = n == 0
        out = np.zeros(X.shape[0])
        if len(self.nig):
            xn = X[:, self.nig]
            xc = xn - self.u0
            s1 = stats.s1[self.nig] - w[:, None] * xc
            s2 = stats.s2[self.nig] - w[:, None] * xc * xc
            u, c, a, b = self._nig_post(n[:, None], s1, s2)
            e = empty[:, None]
            u = np.where(e, self.u0, u)
            c = np.where(e, self.c, c)
            a = np.where(e, self.a, a)
            b = np.where(e, self.b, b)
            out += np.sum(_log_t(xn, u, b / a * (c + 1.0) / c, 2.0 * a), axis=1)
        for d in self.cat:
            g = self.cat_gamma[d]
            k = X[:, d].astype(int)
            out += np.log((g[k] + stats.cnt[d][k] - w) / (g.sum() + n))
        if len(self.bin):
            xb = X[:, self.bin]
            s1 = stats.s1[self.bin] - w[:, None] * xb
            G = self.G
            g0 = self.g0 + s1
            g1 = self.g1 + n[:, None] * G - s1
            out += np.sum(gammaln(G + 1) - gammaln(xb + 1) - gammaln(G - xb + 1)
                          + gammaln(g0 + g1) - gammaln(g0) - gammaln(g1)
                          + gammaln(g0 + xb) + gammaln(g1 + G - xb) - gammaln(g0 + g1 + G), axis=1)
        return out

    def log_joint_dims(self, stats):
        """Per-dimension log h(X_d) for the member set summarised by ``stats``."""
        out = np.zeros(self.D)
        n = stats.n
        if n == 0:
            return out
        if len(self.nig):
            u, c, a, b = self._nig_post(n, stats.s1[self.nig], stats.s2[self.nig])
            out[self.nig] = (-0.5 * n * _LOG_2PI + 0.5 * np.log(self.c / c)
                             + self.a * np.log(self.b) - a * np.log(b) + gammaln(a) - gammaln(self.a))
        for d in self.cat:
            g = self.cat_gamma[d]
            out[d] = (gammaln(g.sum()) - gammaln(g.sum() + n)
                      + np.sum(gammaln(g + stats.cnt[d]) - gammaln(g)))
        if len(self.bin):
            s1 = stats.s1[self.bin]
            G = self.G
            out[self.bin] = (gammaln(self.g0 + self.g1) - gammaln(self.g0) - gammaln(self.g1)
                             + gammaln(self.g0 + s1) + gammaln(self.g1 + n * G - s1)
                             - gammaln(self.g0 + self.g1 + n * G) + stats.lbc[self.bin])
        return out

    def log_joint_marginal(self, stats):
        if stats.n == 0:
            return 0.0
        return float(np.sum(self.log_joint_dims(stats)))

    def log_joint_of(self, X):
        return self.log_joint_marginal(self.stats_of(X))

    # -- sampling (used for subset-of-inputs prediction) --------------------

    def sample_predictive(self, rng, size, stats=None, dims=None):
        """Draw ``size`` inputs from h(x | stats) restricted to ``dims``."""
        dims = list(range(self.D)) if dims is None else list(dims)
        out = np.empty((size, len(dims)))
        n = 0 if stats is None else stats.n
        if len(self.nig):
            if n == 0:
                u, c, a, b = self.u0, self.c, self.a, self.b
            else:
                u, c, a, b = self._nig_post(n, stats.s1[self.nig], stats.s2[self.nig])
            nig_pos = {d: i for i, d in enumerate(self.nig)}
        bin_pos = {d: i for i, d in enumerate(self.bin)}
        for k, d in enumerate(dims):
            if d in self.cat_gamma:
                g = self.cat_gamma[d] + (stats.cnt[d] if n else 0)
                out[:, k] = rng.choice(len(g), size=size, p=g / g.sum())
            elif d in bin_pos:
                i = bin_pos[d]
                s1 = stats.s1[d] if n else 0.0
                p = rng.beta(self.g0[i] + s1, self.g1[i] + n * self.G[i] - s1, size=size)
                out[:, k] = rng.binomial(int(self.G[i]), p)
            else:
                i = nig_pos[d]
                scale = math.sqrt(b[i] / a[i] * (c[i] + 1.0) / c[i])
                out[:, k] = u[i] + scale * rng.standard_t(2.0 * a[i], size=size)
        return out
