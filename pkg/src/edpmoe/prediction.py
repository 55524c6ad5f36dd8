"""Posterior predictive quantities at test inputs.

Every retained draw contributes a new-cluster component with weight
alpha_theta/(alpha_theta+N) h(x*) and one component per y-cluster whose weight
mixes the input predictives of its x-subclusters. Weights are pooled over
draws and normalised by their grand total C. The new-cluster output density is
the prior predictive of y, estimated with S prior draws taken once per batch.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp, ndtr

from edpmoe import gp
from edpmoe.input_models import InputModel
from edpmoe.model import OrdinalProbit, PriorConfig

__all__ = ['PredictiveWeights', 'PredictiveMixture', 'Predictor', 'HPDInterval',
           'compute_weights', 'predictive_mean', 'predictive_density', 'predictive_ordinal',
           'hpd_intervals', 'ordinal_summary', 'predict_subset']


@dataclass
class PredictiveWeights:
    """Unnormalised weights at one test input.

    ``new[m]`` is the new-cluster weight of draw m and ``existing[m][j]`` the
    weight of its y-cluster j; ``C`` is the sum of all of them.
    """
    new: np.ndarray
    existing: List[np.ndarray]
    C: float

    def normalised(self):
        return self.new / self.C, [e / self.C for e in self.existing]

    def total_normalised(self):
        n, e = self.normalised()
        return float(np.sum(n) + sum(np.sum(x) for x in e))


@dataclass
class HPDInterval:
    lower: float
    upper: float
    segments: List[tuple] = field(default_factory=list)

    def contains(self, y):
        return any(a <= y <= b for a, b in self.segments)

    @property
    def length(self):
        return float(sum(b - a for a, b in self.segments))


@dataclass
class PredictiveMixture:
    """Mixture representation of the predictive at a batch of T test inputs.

    ``log_w`` (T, K) holds log weights of the K existing-cluster components
    pooled over draws, ``mean``/``var`` their Gaussian predictive moments and
    ``draw`` the index of the draw each component came from. ``log_new`` (T, M)
    holds the per-draw new-cluster log weights. ``prior`` is the (beta0, variance)
    sample defining the new-cluster density.
    """
    log_w: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    draw: np.ndarray
    log_new: np.ndarray
    prior: tuple
    mu_beta: float

    @property
    def log_C(self):
        return np.logaddexp(logsumexp(self.log_w, axis=1), logsumexp(self.log_new, axis=1))

    def probs(self):
        """Normalised (existing (T, K), new-cluster total (T,))."""
        lc = self.log_C[:, None]
        return np.exp(self.log_w - lc), np.exp(logsumexp(self.log_new, axis=1) - lc[:, 0])

    def weights(self, t):
        lc = float(self.log_C[t])
        # rescale only when the raw weights would under- or overflow
        shift = 0.0 if -600.0 < lc < 600.0 else lc
        w = np.exp(self.log_w[t] - shift)
        M = self.log_new.shape[1]
        existing = [w[self.draw == m] for m in range(M)]
        new = np.exp(self.log_new[t] - shift)
        return PredictiveWeights(new, existing, float(np.sum(new) + np.sum(w)))

    def point_mean(self):
        w, wn = self.probs()
        return np.sum(w * self.mean, axis=1) + wn * self.mu_beta

    def new_density(self, y):
        b, v = self.prior
        y = np.asarray(y, dtype=float)
        z = (y[..., None] - b) ** 2 / v
        return np.mean(np.exp(-0.5 * z) / np.sqrt(2 * np.pi * v), axis=-1)

    def density(self, t, y, tol=1e-12, chunk=2048):
        """Predictive density at test point ``t`` for an array ``y``."""
        w, wn = self.probs()
        wt = w[t]
        keep = wt > tol * wt.max() if wt.size else np.zeros(0, dtype=bool)
        wt, m, v = wt[keep], self.mean[t, keep], self.var[t, keep]
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        out = np.zeros(flat.shape[0])
        for s in range(0, wt.shape[0], chunk):
            sl = slice(s, s + chunk)
            z = (flat[:, None] - m[sl]) ** 2 / v[sl]
            out += np.exp(-0.5 * z) @ (wt[sl] / np.sqrt(2 * np.pi * v[sl]))
        out += wn[t] * self.new_density(flat)
        return out.reshape(y.shape)

    def grid(self, t, n_grid=1024, width=8.0):
        """A grid covering the effective support of the density at ``t``."""
        w, wn = self.probs()
        wt = w[t]
        keep = wt > 1e-10 * max(wt.max(), wn[t]) if wt.size else np.zeros(0, dtype=bool)
        sd = np.sqrt(self.var[t, keep])
        lo = list(self.mean[t, keep] - width * sd)
        hi = list(self.mean[t, keep] + width * sd)
        if wn[t] > 1e-10:
            b, v = self.prior
            q = np.sqrt(v)
            lo.append(np.quantile(b - width * q, 0.001))
            hi.append(np.quantile(b + width * q, 0.999))
        return np.linspace(min(lo), max(hi), n_grid)

    def hpd(self, t, level=0.95, n_grid=1024):
        y = self.grid(t, n_grid)
        f = self.density(t, y)
        return hpd_from_grid(y, f, level)

    def ordinal_pmf(self, cutoffs):
        """(T, L+1) category probabilities given the latent cutoffs."""
        edges = np.concatenate([[-np.inf], np.asarray(cutoffs, dtype=float), [np.inf]])
        w, wn = self.probs()
        sd = np.sqrt(self.var)
        T = self.mean.shape[0]
        out = np.empty((T, edges.shape[0] - 1))
        cdf_prev = np.zeros_like(self.mean)
        b, v = self.prior
        sp = np.sqrt(v)
        new_prev = 0.0
        for l in range(edges.shape[0] - 1):
            if l == edges.shape[0] - 2:
                cdf = np.ones_like(self.mean)
                new_cdf = 1.0
            else:
                cdf = ndtr((edges[l + 1] - self.mean) / sd)
                new_cdf = float(np.mean(ndtr((edges[l + 1] - b) / sp)))
            out[:, l] = np.sum(w * (cdf - cdf_prev), axis=1) + wn * (new_cdf - new_prev)
            cdf_prev = cdf
            new_prev = new_cdf
        return out


def hpd_from_grid(y, f, level=0.95):
    """Highest-density region of a density tabulated on an even grid."""
    dy = y[1] - y[0]
    mass = f * dy
    order = np.argsort(-f)
    cum = np.cumsum(mass[order]) / mass.sum()
    k = int(np.searchsorted(cum, level))
    thr = f[order[min(k, len(order) - 1)]]
    inside = f >= thr
    segs = []
    i = 0
    n = len(y)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        a = _cross(y, f, thr, i - 1, i) if i > 0 else y[0]
        b = _cross(y, f, thr, j, j + 1) if j < n - 1 else y[-1]
        segs.append((float(a), float(b)))
        i = j + 1
    return HPDInterval(segs[0][0], segs[-1][1], segs)


def _cross(y, f, thr, i, j):
    # linear interpolation of the threshold crossing between grid points i and j
    if f[j] == f[i]:
        return 0.5 * (y[i] + y[j])
    return y[i] + (thr - f[i]) * (y[j] - y[i]) / (f[j] - f[i])


class Predictor(object):
    """Batch predictive engine over a set of posterior draws.

    ``S`` prior samples for the new-cluster term are drawn once at construction
    (seeded by ``seed``) and reused for every batch.
    """

    def __init__(self, data, draws, priors=None, S=None, seed=0):
        if len(draws) == 0:
            raise ValueError('no posterior draws')
        self.data = data
        self.draws = draws
        self.priors = priors if priors is not None else PriorConfig()
        self.im = InputModel(data.input_spec)
        self.dp = getattr(draws, 'mode', 'edp') == 'dp'
        self.rng = np.random.default_rng(seed)
        S = self.priors.S if S is None else S
        pp = self.priors.sample_experts(self.rng, data.D, S)
        b = np.array([p.beta0 for p in pp])
        v = np.array([p.sigma2 + p.magnitude for p in pp])
        self.prior = (b, v)
        self.mu_beta = self.priors.mu_beta

    def _draw_parts(self, st):
        """Per y-cluster member indices, x-subcluster statistics and sizes."""
        zy, zx = st.partition.zy, st.partition.zx
        parts = []
        for j in range(st.k):
            idx = np.flatnonzero(zy == j)
            if self.dp:
                groups = [idx]
            else:
                groups = [idx[zx[idx] == l] for l in range(zx[idx].max() + 1)]
            parts.append((idx, groups))
        return parts

    def mixture(self, Xs):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if Xs.shape[1] != self.data.D:
            raise ValueError(f'test inputs need {self.data.D} columns')
        T = Xs.shape[0]
        N = self.data.N
        X = self.data.X
        lx0 = self.im.log_predictive_rows(Xs).sum(axis=1)
        lw, mu, var, which = [], [], [], []
        log_new = np.empty((T, len(self.draws)))
        for m, st in enumerate(self.draws.states):
            at = st.conc.alpha_theta
            lden = np.log(at + N)
            log_new[:, m] = np.log(at) - lden + lx0
            for j, (idx, groups) in enumerate(self._draw_parts(st)):
                Nj = idx.shape[0]
                aj = st.conc.alpha_psi[j]
                if self.dp:
                    lxj = self.im.log_predictive_rows(Xs, self.im.stats_of(X[idx])).sum(axis=1)
                else:
                    terms = [np.log(aj / (aj + Nj)) + lx0]
                    for g in groups:
                        lg = self.im.log_predictive_rows(Xs, self.im.stats_of(X[g])).sum(axis=1)
                        terms.append(np.log(g.shape[0] / (aj + Nj)) + lg)
                    lxj = logsumexp(np.array(terms), axis=0)
                lw.append(np.log(Nj) - lden + lxj)
                cache = gp.GpCache(st.latent[idx], X[idx], st.experts[j])
                a, b = cache.mean_var(Xs)
                mu.append(a)
                var.append(b)
                which.append(m)
        return PredictiveMixture(np.array(lw).T, np.array(mu).T, np.array(var).T,
                                 np.array(which), log_new, self.prior, self.mu_beta)

    def mean(self, Xs):
        return self.mixture(Xs).point_mean()

    def density(self, y, Xs):
        """Density at each pair (y[t], Xs[t]); a 2-D ``y`` gives a row of values per test input."""
        mix = self.mixture(Xs)
        y = np.asarray(y, dtype=float)
        T = mix.mean.shape[0]
        if y.shape[0] != T or y.ndim > 2:
            raise ValueError('y needs one entry (or one row) per test input')
        return np.array([mix.density(t, y[t]) for t in range(T)])

    def hpd(self, Xs, level=0.95, n_grid=1024):
        mix = self.mixture(Xs)
        return [mix.hpd(t, level, n_grid) for t in range(mix.mean.shape[0])]

    def ordinal(self, Xs):
        if not isinstance(self.data.output, OrdinalProbit):
            raise ValueError('ordinal prediction needs an ordinal dataset')
        return self.mixture(Xs).ordinal_pmf(self.data.output.cutoffs)

    def subset(self, xd, d, R=200):
        """E[y | x_d] from the weights of dimension ``d`` alone.

        Expectations over the other inputs use R completions drawn from the
        prior input predictive (new x-subclusters) or from each x-subcluster's
        posterior predictive.
        """
        xd = np.atleast_1d(np.asarray(xd, dtype=float))
        D = self.data.D
        if not 0 <= d < D:
            raise ValueError(f'dimension {d} out of range for D={D}')
        X = self.data.X
        N = self.data.N
        rest = [k for k in range(D) if k != d]
        T = xd.shape[0]

        def lpred(stats):
            full = np.zeros((T, D))
            full[:, d] = xd
            return self.im.log_predictive_rows(full, stats)[:, d]

        def completions(stats):
            # (T*R, D) input rows: x_d fixed, the others drawn from h(. | stats)
            full = np.empty((T, R, D))
            full[:, :, d] = xd[:, None]
            if rest:
                full[:, :, rest] = self.im.sample_predictive(self.rng, R, stats, rest)[None]
            return full.reshape(T * R, D)

        prior_rows = completions(None)
        ld0 = lpred(None)
        lw, vals = [], []
        for st in self.draws.states:
            at = st.conc.alpha_theta
            lden = np.log(at + N)
            lw.append(np.log(at) - lden + ld0)
            vals.append(np.full(T, self.mu_beta))
            for j, (idx, groups) in enumerate(self._draw_parts(st)):
                Nj = idx.shape[0]
                aj = st.conc.alpha_psi[j]
                cache = gp.GpCache(st.latent[idx], X[idx], st.experts[j])
                if not self.dp:
                    lw.append(np.log(Nj) - lden + np.log(aj / (aj + Nj)) + ld0)
                    vals.append(cache.mean_only(prior_rows).reshape(T, R).mean(axis=1))
                for g in groups:
                    stats = self.im.stats_of(X[g])
                    if self.dp:
                        lw.append(np.log(Nj) - lden + lpred(stats))
                    else:
                        lw.append(np.log(Nj) - lden + np.log(g.shape[0] / (aj + Nj)) + lpred(stats))
                    rows = completions(stats) if rest else prior_rows
                    vals.append(cache.mean_only(rows).reshape(T, R).mean(axis=1))
        lw = np.array(lw)
        w = np.exp(lw - logsumexp(lw, axis=0))
        return np.sum(w * np.array(vals), axis=0)


# -- functional interface ---------------------------------------------------

def compute_weights(x, draws, data):
    """Unnormalised predictive weights at the single input ``x``."""
    pr = Predictor(data, draws, S=1)
    return pr.mixture(np.atleast_2d(x)).weights(0)


def predictive_mean(X, draws, data, priors=None):
    return Predictor(data, draws, priors, S=1).mean(X)


def predictive_density(y, X, draws, data, priors=None, S=None, seed=0):
    return Predictor(data, draws, priors, S, seed).density(y, X)


def hpd_intervals(X, draws, data, priors=None, level=0.95, S=None, seed=0, n_grid=1024):
    return Predictor(data, draws, priors, S, seed).hpd(X, level, n_grid)


def predictive_ordinal(X, draws, data, priors=None, S=None, seed=0):
    return Predictor(data, draws, priors, S, seed).ordinal(X)


def ordinal_summary(pmf, level=0.95):
    """Median category and central interval (lower, upper) per row of ``pmf``."""
    pmf = np.atleast_2d(pmf)
    cdf = np.cumsum(pmf, axis=1)
    tail = 0.5 * (1.0 - level)
    med = np.argmax(cdf >= 0.5 - 1e-12, axis=1)
    lo = np.argmax(cdf >= tail - 1e-12, axis=1)
    hi = np.argmax(cdf >= 1.0 - tail - 1e-12, axis=1)
    return med, lo, hi


def predict_subset(xd, d, draws, data, priors=None, R=200, seed=0):
    return Predictor(data, draws, priors, S=1, seed=seed).subset(xd, d, R)
