"""Split-merge moves for x-clusters inside a fixed y-cluster.

Two paired Metropolis-Hastings updates per iteration: smart-split with
dumb-merge, then dumb-split with smart-merge. Smart splits reallocate points
sequentially in order of observation with probabilities proportional to the
input predictive of each half; smart merges pick the partner in proportion to
the joint marginal of the merged cluster. Outputs are unaffected, so only the
input marginals and the allocation prior enter the ratios.
"""
import math

from scipy.special import gammaln

from edpmoe.sampler.chain import bits
from edpmoe.sampler.util import logsumexp, sample_log

__all__ = ['splitmerge_step', 'smart_split', 'dumb_merge', 'dumb_split', 'smart_merge', 'dumb_split_log_q']

_LOG2 = math.log(2.0)


def splitmerge_step(ch):
    if ch.config.dp:
        return
    if ch.rng.random() < 0.5:
        smart_split(ch)
    else:
        dumb_merge(ch)
    if ch.rng.random() < 0.5:
        dumb_split(ch)
    else:
        smart_merge(ch)


# -- helpers ----------------------------------------------------------------

def _pred2(ch, n, mA, mB, stA, stB):
    if ch.memo_x is not None:
        b = 1 << n
        return ch.lx_ml(mA | b) - ch.lx_ml(mA), ch.lx_ml(mB | b) - ch.lx_ml(mB)
    v = ch.im.log_predictive_many(ch.X[n], [stA, stB])
    return float(v[0]), float(v[1])


def _sequential(ch, members, target=None):
    """Sequential two-way allocation of ``members``.

    Samples a split when ``target`` is None, otherwise scores the given split
    (``target`` is the mask of side A). Returns (mask A, mask B, log prob).
    """
    mA = mB = 0
    stA = stB = None
    if ch.memo_x is None:
        stA = ch.im.empty_stats()
        stB = ch.im.empty_stats()
    lq = 0.0
    for n in members:
        la, lb = _pred2(ch, n, mA, mB, stA, stB)
        top = max(la, lb)
        lz = top + math.log(math.exp(la - top) + math.exp(lb - top))
        if target is None:
            to_a = math.log(ch.rng.random()) < la - lz
        else:
            to_a = bool(target >> n & 1)
        lq += (la if to_a else lb) - lz
        if to_a:
            mA |= 1 << n
            if stA is not None:
                ch.im.add(stA, ch.X[n])
        else:
            mB |= 1 << n
            if stB is not None:
                ch.im.add(stB, ch.X[n])
    return mA, mB, lq


def _lxm(ch, mask):
    return ch.lx_ml(mask)


def _split(ch, c, xc, mB):
    """Move the members in ``mB`` out of ``xc`` into a new x-cluster of ``c``."""
    new = ch.new_xcluster(c)
    xc.mask &= ~mB
    xc.n = bin(xc.mask).count('1')
    new.mask = mB
    new.n = bin(mB).count('1')
    if ch.track_stats:
        xc.stats = ch.im.stats_of(ch.X[bits(xc.mask)])
        new.stats = ch.im.stats_of(ch.X[bits(mB)])
    for i in bits(mB):
        ch.ax[i] = new


def _merge(ch, c, xa, xb):
    xa.mask |= xb.mask
    xa.n += xb.n
    if ch.track_stats:
        xa.stats = ch.im.stats_of(ch.X[bits(xa.mask)])
    c.xcl.remove(xb)
    for i in bits(xb.mask):
        ch.ax[i] = xa


def dumb_split_log_q(kx1p, n):
    """log probability that dumb-split proposes one given unordered split of
    an n-point x-cluster: uniform cluster choice, then fair coins (label symmetry
    counts each split twice)."""
    return -math.log(kx1p) - (n - 1) * _LOG2


def _kx2p_after_split(kx2p, kj):
    return kx2p + (2 if kj == 1 else 1)


# -- smart-split / dumb-merge -----------------------------------------------

def smart_split(ch):
    pool = [(c, xc) for c in ch.clusters for xc in c.xcl if xc.n > 1]
    if not pool:
        return False
    linv = [-ch.lx_cluster(xc) for _, xc in pool]
    c, xc = pool[sample_log(linv, ch.rng.random())]
    members = bits(xc.mask)
    mA, mB, lq = _sequential(ch, members)
    if mA == 0 or mB == 0:
        # all points on one side: the proposal equals the current state
        ch.stats.record('smart_split_noop', True)
        return False
    kj = len(c.xcl)
    kx2p_star = _kx2p_after_split(ch.kx2plus(), kj)
    lx_l = ch.lx_cluster(xc)
    nA, nB = bin(mA).count('1'), bin(mB).count('1')
    lp = (math.log(c.alpha) + gammaln(nA) + gammaln(nB) + _lxm(ch, mA) + _lxm(ch, mB)
          - gammaln(xc.n) - lx_l - math.log(kx2p_star) - math.log(kj)
          + logsumexp(linv) + lx_l - lq)
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _split(ch, c, xc, mB)
    ch.stats.record('smart_split', acc)
    return acc


def dumb_merge(ch):
    multi = [c for c in ch.clusters if len(c.xcl) > 1]
    if not multi:
        return False
    pool = [(c, xc) for c in multi for xc in c.xcl]
    kx2p = len(pool)
    c, xa = pool[int(ch.rng.random() * kx2p)]
    rest = [x for x in c.xcl if x is not xa]
    kj = len(c.xcl)
    xb = rest[int(ch.rng.random() * len(rest))]
    mM = xa.mask | xb.mask
    nM = xa.n + xb.n
    lx_m = _lxm(ch, mM)
    # reverse smart-split: selection among x-clusters of size > 1 after the merge
    inv = [-ch.lx_cluster(x) for cc in ch.clusters for x in cc.xcl
           if x is not xa and x is not xb and (x.n > 1 or ch.config.printed_ratios)]
    inv.append(-lx_m)
    _, _, lq = _sequential(ch, bits(mM), target=xa.mask)
    lp = (gammaln(nM) + lx_m - math.log(c.alpha) - gammaln(xa.n) - gammaln(xb.n)
          - ch.lx_cluster(xa) - ch.lx_cluster(xb)
          + math.log(kx2p) + math.log(kj - 1) - lx_m - logsumexp(inv) + lq)
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _merge(ch, c, xa, xb)
    ch.stats.record('dumb_merge', acc)
    return acc


# -- dumb-split / smart-merge -----------------------------------------------

def _partner_lse(ch, c, x, exclude=None, extra=None):
    """log sum over partners h != x in ``c`` of h(X_(x,h)).

    ``exclude`` drops an x-cluster from the partner set and ``extra`` adds a
    (mask) partner not yet present in ``c``.
    """
    xm = x if isinstance(x, int) else x.mask
    terms = [_lxm(ch, xm | h.mask) for h in c.xcl if h is not x and h is not exclude]
    if extra is not None:
        terms.append(_lxm(ch, xm | extra))
    return logsumexp(terms)


def dumb_split(ch):
    pool = [(c, xc) for c in ch.clusters for xc in c.xcl if xc.n > 1]
    if not pool:
        return False
    kx1p = len(pool)
    c, xc = pool[int(ch.rng.random() * kx1p)]
    mA = mB = 0
    for i in bits(xc.mask):
        if ch.rng.random() < 0.5:
            mA |= 1 << i
        else:
            mB |= 1 << i
    if mA == 0 or mB == 0:
        ch.stats.record('dumb_split_noop', True)
        return False
    kj = len(c.xcl)
    kx2p_star = _kx2p_after_split(ch.kx2plus(), kj)
    lx_l = ch.lx_cluster(xc)
    nA, nB = bin(mA).count('1'), bin(mB).count('1')
    # reverse smart-merge in the split state: partners of A include B and vice versa
    lseA = _partner_lse(ch, c, mA, exclude=xc, extra=mB)
    lseB = _partner_lse(ch, c, mB, exclude=xc, extra=mA)
    lrev = logsumexp([lx_l - lseA, lx_l - lseB])
    lp = (math.log(c.alpha) + gammaln(nA) + gammaln(nB) + _lxm(ch, mA) + _lxm(ch, mB)
          - gammaln(xc.n) - lx_l - dumb_split_log_q(kx1p, xc.n)
          - math.log(kx2p_star) + lrev)
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _split(ch, c, xc, mB)
    ch.stats.record('dumb_split', acc)
    return acc


def smart_merge(ch):
    multi = [c for c in ch.clusters if len(c.xcl) > 1]
    if not multi:
        return False
    pool = [(c, xc) for c in multi for xc in c.xcl]
    kx2p = len(pool)
    c, xa = pool[int(ch.rng.random() * kx2p)]
    rest = [x for x in c.xcl if x is not xa]
    lw = [_lxm(ch, xa.mask | x.mask) for x in rest]
    xb = rest[sample_log(lw, ch.rng.random())]
    mM = xa.mask | xb.mask
    nM = xa.n + xb.n
    lx_m = _lxm(ch, mM)
    lfwd = logsumexp([lx_m - logsumexp(lw), lx_m - _partner_lse(ch, c, xb)])
    kx1p_star = ch.kx1plus() - (xa.n > 1) - (xb.n > 1) + 1
    lp = (gammaln(nM) + lx_m - math.log(c.alpha) - gammaln(xa.n) - gammaln(xb.n)
          - ch.lx_cluster(xa) - ch.lx_cluster(xb)
          + dumb_split_log_q(kx1p_star, nM) + math.log(kx2p) - lfwd)
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _merge(ch, c, xa, xb)
    ch.stats.record('smart_merge', acc)
    return acc
