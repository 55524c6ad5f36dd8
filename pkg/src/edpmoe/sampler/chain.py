"""Mutable working state of one MCMC chain.

Clusters are objects referenced directly by the per-point assignment arrays,
so relabelling is never needed during a sweep; canonical labels are produced
only when a state is exported. Member sets are stored as integer bitmasks.

When every expert parameter has a point-mass prior and outputs are Gaussian,
the GP log-marginal of a member set depends on the set alone, so it is
memoised by bitmask (likewise the input-model joint marginals). This makes
long runs on tiny problems cheap without changing any transition.
"""
import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from edpmoe import gp
from edpmoe.input_models import InputModel
from edpmoe.model import (ConcentrationParams, ExpertParams, NestedPartition, PriorConfig,
                          SamplerState)

__all__ = ['SamplerConfig', 'MoveStats', 'Chain', 'YCluster', 'XCluster', 'bits']

MEMO_MAX_N = 16
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SamplerConfig:
    """Sampler settings.

    ``mode='dp'`` forces a single x-cluster per y-cluster (the plain DP mixture).
    ``printed_ratios`` switches the y-cluster moves and dumb-merge to the
    acceptance ratios as originally printed (kept for sensitivity checks).
    """
    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    mode: str = 'edp'
    gibbs: bool = True
    ymoves: bool = True
    splitmerge: bool = True
    hmc: bool = True
    concentrations: bool = True
    latent: bool = True
    printed_ratios: bool = False
    init: str = 'one'

    def __post_init__(self):
        if self.mode not in ('edp', 'dp'):
            raise ValueError(f"mode must be 'edp' or 'dp', got {self.mode!r}")
        if self.n_iter <= self.burn_in or self.burn_in < 0:
            raise ValueError('n_iter must exceed burn_in >= 0')
        if self.thin < 1:
            raise ValueError('thin must be >= 1')
        if self.init not in ('one', 'singletons'):
            raise ValueError("init must be 'one' or 'singletons'")

    @property
    def dp(self):
        return self.mode == 'dp'


@dataclass
class MoveStats:
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)

    def record(self, name, accepted):
        self.proposed[name] = self.proposed.get(name, 0) + 1
        if accepted:
            self.accepted[name] = self.accepted.get(name, 0) + 1

    def rate(self, name):
        p = self.proposed.get(name, 0)
        return self.accepted.get(name, 0) / p if p else float('nan')

    def to_dict(self):
        return {k: {'proposed': v, 'accepted': self.accepted.get(k, 0)}
                for k, v in sorted(self.proposed.items())}


def bits(mask):
    """Sorted member indices of a bitmask."""
    if mask >> 64:
        nb = (mask.bit_length() + 7) // 8
        b = np.unpackbits(np.frombuffer(mask.to_bytes(nb, 'little'), dtype=np.uint8), bitorder='little')
        return np.flatnonzero(b).tolist()
    out = []
    i = 0
    while mask:
        low = mask & -mask
        i = low.bit_length() - 1
        out.append(i)
        mask ^= low
    return out


class XCluster(object):
    __slots__ = ('mask', 'n', 'stats', 'parent', 'table', 'tmask', 'miss')

    def __init__(self, parent, stats):
        # ``table`` holds log h(x_m | X_l without m) for every point m, valid
        # while the membership equals ``tmask`` up to the queried point
        self.table = None
        self.miss = 0
        self.tmask = 0
        self.mask = 0
        self.n = 0
        self.stats = stats
        self.parent = parent


class YCluster(object):
    __slots__ = ('mask', 'n', 'params', 'alpha', 'xcl', 'cache')

    def __init__(self, params, alpha):
        self.mask = 0
        self.n = 0
        self.params = params
        self.alpha = float(alpha)
        self.xcl = []
        self.cache = None


class Chain(object):
    """State plus the likelihood queries shared by all transition kernels."""

    def __init__(self, data, priors=None, config=None, rng=None):
        self.data = data
        # private copy: step-size adaptation writes into the HMC settings
        self.priors = copy.deepcopy(priors) if priors is not None else PriorConfig()
        self.config = config if config is not None else SamplerConfig()
        self.rng = rng if rng is not None else np.random.default_rng(self.config.seed)
        self.X = data.X
        self.N, self.D = data.X.shape
        self.im = InputModel(data.input_spec)
        self.ordinal = data.is_ordinal
        self.ytil = data.y.copy()
        if self.ordinal:
            self.lo, self.hi = data.output.interval(data.y.astype(int))
            self.ytil = _initial_latent(self.lo, self.hi)
        self.param_priors = self.priors.param_priors(self.D)
        self.frozen = all(p.fixed for p in self.param_priors)
        self.memo = self.N <= MEMO_MAX_N
        self.memo_y = {} if (self.memo and self.frozen and not self.ordinal) else None
        self.memo_x = {} if self.memo else None
        # x-cluster sufficient statistics are only read when marginals are not memoised
        self.track_stats = self.memo_x is None
        if self.frozen:
            self._p0 = self.priors.sample_expert(self.rng, self.D)
        self._pool = []
        self._pool_alpha = []
        self.lx0 = np.array([self.im.log_marginal_point(x) for x in self.X])
        self.alpha_theta = float(self.priors.alpha_theta.sample(self.rng))
        self.clusters = []
        self.ay = [None] * self.N
        self.ax = [None] * self.N
        self.stats = MoveStats()

    # -- construction -------------------------------------------------------

    def new_params(self):
        if self.frozen:
            # point-mass priors: parameter objects are immutable so one can be shared
            return self._p0, self.priors.sample_alpha_psi(self.rng)
        if not self._pool:
            # drawing candidates in blocks is much cheaper than one at a time
            k = max(64, self.N * self.priors.m)
            self._pool = self.priors.sample_experts(self.rng, self.D, k)
            self._pool_alpha = list(self.priors.alpha_psi.sample(self.rng, size=k) * np.ones(k))
        return self._pool.pop(), float(self._pool_alpha.pop())

    def new_ycluster(self, params, alpha):
        c = YCluster(params, alpha)
        self.clusters.append(c)
        return c

    def new_xcluster(self, c):
        xc = XCluster(c, self.im.empty_stats())
        c.xcl.append(xc)
        return xc

    def add_point(self, n, c, xc):
        b = 1 << n
        c.mask |= b
        c.n += 1
        c.cache = None
        xc.mask |= b
        xc.n += 1
        if self.track_stats:
            self.im.add(xc.stats, self.X[n])
        self.ay[n] = c
        self.ax[n] = xc

    def remove_point(self, n):
        """Detach point n; empty clusters are dropped immediately."""
        c = self.ay[n]
        xc = self.ax[n]
        b = 1 << n
        c.mask &= ~b
        c.n -= 1
        c.cache = None
        xc.mask &= ~b
        xc.n -= 1
        if self.track_stats:
            self.im.remove(xc.stats, self.X[n])
        if xc.n == 0:
            c.xcl.remove(xc)
        if c.n == 0:
            self.clusters.remove(c)
        self.ay[n] = None
        self.ax[n] = None

    def init_state(self):
        cfg = self.config
        if cfg.init == 'singletons':
            for n in range(self.N):
                c = self.new_ycluster(*self.new_params())
                self.add_point(n, c, self.new_xcluster(c))
        else:
            c = self.new_ycluster(*self.new_params())
            xc = self.new_xcluster(c)
            for n in range(self.N):
                self.add_point(n, c, xc)
        return self

    @classmethod
    def from_state(cls, data, state, priors=None, config=None, rng=None):
        ch = cls(data, priors, config, rng)
        p = state.partition
        ch.alpha_theta = float(state.conc.alpha_theta)
        ys = {}
        for n in range(ch.N):
            j, l = int(p.zy[n]), int(p.zx[n])
            if j not in ys:
                ys[j] = (ch.new_ycluster(state.experts[j].copy(), state.conc.alpha_psi[j]), {})
            c, xs = ys[j]
            if l not in xs:
                xs[l] = ch.new_xcluster(c)
            ch.add_point(n, c, xs[l])
        if ch.ordinal and state.latent is not None and len(state.latent) == ch.N:
            ch.ytil = np.asarray(state.latent, dtype=float).copy()
        return ch

    def set_partition(self, zy, zx, params=None, alpha=None):
        """Replace the allocation (used by tests and enumeration checks)."""
        self.clusters = []
        ys = {}
        for n in range(self.N):
            j, l = int(zy[n]), int(zx[n])
            if j not in ys:
                pr, al = self.new_params() if params is None else (params.copy(), alpha)
                ys[j] = (self.new_ycluster(pr, al), {})
            c, xs = ys[j]
            if l not in xs:
                xs[l] = self.new_xcluster(c)
            self.add_point(n, c, xs[l])

    # -- export -------------------------------------------------------------

    def labels(self):
        """Canonical (order of appearance) nested labels."""
        ymap, xmap = {}, {}
        zy = np.empty(self.N, dtype=int)
        zx = np.empty(self.N, dtype=int)
        for n in range(self.N):
            c, xc = self.ay[n], self.ax[n]
            if id(c) not in ymap:
                ymap[id(c)] = (len(ymap), {})
            j, sub = ymap[id(c)]
            if id(xc) not in sub:
                sub[id(xc)] = len(sub)
            zy[n] = j
            zx[n] = sub[id(xc)]
        return zy, zx

    def partition_key(self):
        zy, zx = self.labels()
        return tuple(zip(zy.tolist(), zx.tolist()))

    def ordered_clusters(self):
        seen = []
        ids = set()
        for n in range(self.N):
            c = self.ay[n]
            if id(c) not in ids:
                ids.add(id(c))
                seen.append(c)
        return seen

    def to_state(self, iteration=-1):
        zy, zx = self.labels()
        cl = self.ordered_clusters()
        return SamplerState(NestedPartition(zy, zx), [c.params.copy() for c in cl],
                            ConcentrationParams(self.alpha_theta, [c.alpha for c in cl]),
                            self.ytil.copy(), iteration)

    # -- counts -------------------------------------------------------------

    def kx2plus(self):
        return sum(len(c.xcl) for c in self.clusters if len(c.xcl) > 1)

    def kx1(self):
        return sum(1 for c in self.clusters if len(c.xcl) == 1)

    def kx1plus(self):
        return sum(1 for c in self.clusters for xc in c.xcl if xc.n > 1)

    # -- y-likelihoods ------------------------------------------------------

    def _ylm_mask(self, mask):
        v = self.memo_y.get(mask)
        if v is None:
            idx = bits(mask)
            v = gp.log_marginal(self.ytil[idx], self.X[idx], self.clusters_params0)
            self.memo_y[mask] = v
        return v

    @property
    def clusters_params0(self):
        # with all expert priors fixed every cluster shares the same parameters
        return self._p0

    def cache(self, c):
        if c.cache is None:
            idx = bits(c.mask)
            c.cache = gp.GpCache(self.ytil[idx], self.X[idx], c.params)
            c.cache.pos = {i: k for k, i in enumerate(idx)}
            c.cache.table = None
        return c.cache

    def ly_point(self, n, c):
        """log h(ytil_n | Y_c without n, theta_c)."""
        ca = c.cache
        if ca is not None and ca.table is not None:
            return ca.table[n]
        b = 1 << n
        if self.memo_y is not None:
            return self._ylm_mask(c.mask | b) - self._ylm_mask(c.mask & ~b)
        if c.n == 0 or (c.n == 1 and c.mask & b):
            return self.ly_new(n, c.params)
        ca = self.cache(c)
        if ca.table is None:
            ca.table = self._point_table(ca, c)
        return float(ca.table[n])

    def _point_table(self, ca, c):
        # every point's conditional under c at once: leave-one-out for members,
        # plain conditional for the rest; reused until the cache is dropped
        out = np.empty(self.N)
        inside = np.zeros(self.N, dtype=bool)
        idx = bits(c.mask)
        inside[idx] = True
        out[idx] = ca.loo_all()
        rest = np.flatnonzero(~inside)
        if rest.size:
            out[rest] = ca.cond_points(self.X[rest], self.ytil[rest])
        return out

    def ly_new(self, n, p):
        v = p.sigma2 + p.magnitude
        r = self.ytil[n] - p.beta0
        return -0.5 * (_LOG_2PI + math.log(v) + r * r / v)

    def ly_ml(self, mask, params):
        """log h(Y_mask | params)."""
        if mask == 0:
            return 0.0
        if self.memo_y is not None:
            return self._ylm_mask(mask)
        idx = bits(mask)
        return gp.log_marginal(self.ytil[idx], self.X[idx], params)

    def ly_cluster(self, c):
        if self.memo_y is not None:
            return self._ylm_mask(c.mask)
        return self.cache(c).logml

    def ly_cond(self, block, c, other=None):
        """log h(Y_block | Y_other, theta_c); ``other`` defaults to c's members."""
        other = c.mask if other is None else other
        if self.memo_y is not None:
            return self._ylm_mask(other | block) - self._ylm_mask(other)
        if other == c.mask and c.n > 0:
            return self.ly_ml(other | block, c.params) - self.cache(c).logml
        return self.ly_ml(other | block, c.params) - self.ly_ml(other, c.params)

    # -- x-likelihoods ------------------------------------------------------

    def lx_ml(self, mask):
        if mask == 0:
            return 0.0
        if self.memo_x is not None:
            v = self.memo_x.get(mask)
            if v is None:
                v = self.im.log_joint_marginal(self.im.stats_of(self.X[bits(mask)]))
                self.memo_x[mask] = v
            return v
        return self.im.log_joint_marginal(self.im.stats_of(self.X[bits(mask)]))

    def lx_cluster(self, xc):
        if self.memo_x is not None:
            return self.lx_ml(xc.mask)
        return self.im.log_joint_marginal(xc.stats)

    def lx_points(self, n, xcs):
        """log h(x_n | X_l without n) for each x-cluster in ``xcs``."""
        b = 1 << n
        if self.memo_x is not None:
            return [self.lx_ml(xc.mask | b) - self.lx_ml(xc.mask & ~b) for xc in xcs]
        out = []
        x = self.X[n]
        for xc in xcs:
            if xc.table is not None and (xc.mask | b) == (xc.tmask | b):
                out.append(xc.table[n])
                continue
            xc.miss += 1
            if xc.miss < 4 and not xc.mask & b:
                # recently changed cluster: a single query is cheaper than a table
                out.append(float(self.im.log_predictive_many(x, [xc.stats])[0]))
                continue
            inside = np.zeros(self.N, dtype=bool)
            inside[bits(xc.mask)] = True
            xc.table = self.im.log_predictive_loo(self.X, xc.stats, inside)
            xc.tmask = xc.mask
            xc.miss = 0
            out.append(xc.table[n])
        return out

    # -- target -------------------------------------------------------------

    def log_target(self):
        """Log posterior of the allocation given parameters (up to a constant)."""
        return log_target_partition(self, [(c.mask, [xc.mask for xc in c.xcl], c.params, c.alpha)
                                           for c in self.clusters])

    def check(self):
        """Assert internal bookkeeping equals a fresh recount."""
        total = 0
        seen = 0
        for c in self.clusters:
            assert c.n > 0 and c.n == bin(c.mask).count('1')
            assert c.mask & seen == 0
            seen |= c.mask
            xm = 0
            assert len(c.xcl) >= 1
            if self.config.dp:
                assert len(c.xcl) == 1
            for xc in c.xcl:
                assert xc.n > 0 and xc.n == bin(xc.mask).count('1') and xc.parent is c
                assert xm & xc.mask == 0
                xm |= xc.mask
                if self.track_stats:
                    ref = self.im.stats_of(self.X[bits(xc.mask)])
                    assert ref.n == xc.stats.n
                    assert np.allclose(ref.s1, xc.stats.s1, rtol=1e-10, atol=1e-9)
                    assert np.allclose(ref.s2, xc.stats.s2, rtol=1e-10, atol=1e-9)
                    for d in ref.cnt:
                        assert np.array_equal(ref.cnt[d], xc.stats.cnt[d])
                for n in bits(xc.mask):
                    assert self.ay[n] is c and self.ax[n] is xc
            assert xm == c.mask
            total += c.n
        assert total == self.N and seen == (1 << self.N) - 1
        if self.ordinal:
            assert np.all(self.ytil > self.lo) and np.all(self.ytil <= self.hi)
        return True


def log_target_partition(chain, clusters, dp=None):
    """Log of the allocation prior times all marginal likelihoods.

    ``clusters`` is a list of (y-mask, [x-masks], params, alpha_psi). Used by
    the sampler checks and the enumeration oracle in the tests.
    """
    dp = chain.config.dp if dp is None else dp
    at = chain.alpha_theta
    k = len(clusters)
    lp = k * math.log(at) + gammaln(at) - gammaln(at + chain.N)
    for ymask, xmasks, params, alpha in clusters:
        Nj = bin(ymask).count('1')
        lp += chain.ly_ml(ymask, params)
        if dp:
            lp += gammaln(Nj) + chain.lx_ml(ymask)
            continue
        kj = len(xmasks)
        lp += kj * math.log(alpha) + gammaln(alpha) - gammaln(alpha + Nj) + gammaln(Nj)
        for xm in xmasks:
            lp += gammaln(bin(xm).count('1')) + chain.lx_ml(xm)
    return float(lp)


def _initial_latent(lo, hi):
    out = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    out = np.where(~np.isfinite(lo), hi - 0.5, out)
    out = np.where(~np.isfinite(hi), lo + 0.5, out)
    return out
