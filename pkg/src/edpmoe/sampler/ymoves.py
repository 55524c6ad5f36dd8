"""Global moves that relocate a whole x-cluster to another y-cluster.

Move 1: an x-cluster from a y-cluster holding several x-clusters moves to
another existing y-cluster. Move 2: such an x-cluster moves to a new
y-cluster with parameters drawn from the prior. Move 3: the only x-cluster of
a y-cluster moves into another y-cluster (the source y-cluster disappears).
Moves 2 and 3 are each other's reverse. Destinations are proposed in
proportion to the conditional GP marginal likelihood of the moved outputs.

The acceptance ratios include the probability of picking Move 2 versus
Move 3 in the current and proposed states, and the count of x-clusters in
single-x-cluster y-clusters after the move; ``printed_ratios`` drops both
corrections.
"""
import math

from scipy.special import gammaln

from edpmoe.sampler.util import logsumexp, sample_log

__all__ = ['ymove_step', 'move1', 'move2', 'move3', 'rho2']


def rho2(kx1, kx2p):
    """Probability that the Move 2 / Move 3 step picks Move 2."""
    if kx1 == 0:
        return 1.0
    if kx2p == 0:
        return 0.0
    return 0.5


def ymove_step(ch):
    """One application of the y-cluster moves: Move 1 if possible, then Move 2 or 3."""
    if ch.config.dp:
        return
    if ch.kx2plus() > 0:
        move1(ch)
    if ch.rng.random() < rho2(ch.kx1(), ch.kx2plus()):
        move2(ch)
    else:
        move3(ch)


def _pick_multi(ch):
    """Uniform x-cluster among those in y-clusters with more than one x-cluster."""
    pool = [(c, xc) for c in ch.clusters if len(c.xcl) > 1 for xc in c.xcl]
    return pool[int(ch.rng.random() * len(pool))], len(pool)


def _relocate(ch, xc, src, dst):
    """Move x-cluster ``xc`` from y-cluster ``src`` into ``dst`` (None creates nothing)."""
    src.xcl.remove(xc)
    src.mask &= ~xc.mask
    src.n -= xc.n
    src.cache = None
    if src.n == 0:
        ch.clusters.remove(src)
    dst.xcl.append(xc)
    dst.mask |= xc.mask
    dst.n += xc.n
    dst.cache = None
    xc.parent = dst
    for i in _members(xc.mask):
        ch.ay[i] = dst


def _members(mask):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def move1(ch):
    if len(ch.clusters) < 2 or ch.kx2plus() == 0:
        return False
    (j, xc), kx2p = _pick_multi(ch)
    others = [h for h in ch.clusters if h is not j]
    lq = [ch.ly_cond(xc.mask, h) for h in others]
    ih = sample_log(lq, ch.rng.random())
    h = others[ih]
    nl, Nj, Nh = xc.n, j.n, h.n
    aj, ah = j.alpha, h.alpha
    kj, kh = len(j.xcl), len(h.xcl)
    kx2p_star = kx2p - (kj == 2) + (kh == 1)
    # reverse proposal: destination j, whose outputs then exclude the moved block
    lq_rev = [ch.ly_cond(xc.mask, j, j.mask & ~xc.mask)] + [lq[i] for i in range(len(others)) if i != ih]
    lp = (gammaln(Nj - nl) + gammaln(Nh + nl) - gammaln(Nj) - gammaln(Nh)
          + gammaln(aj + Nj) + gammaln(ah + Nh) - gammaln(aj + Nj - nl) - gammaln(ah + Nh + nl)
          + math.log(ah) - math.log(aj) + math.log(kx2p) - math.log(kx2p_star)
          + logsumexp(lq) - logsumexp(lq_rev))
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _relocate(ch, xc, j, h)
    ch.stats.record('move1', acc)
    return acc


def move2(ch):
    if ch.kx2plus() == 0:
        return False
    kx1 = ch.kx1()
    (j, xc), kx2p = _pick_multi(ch)
    params, alpha = ch.new_params()
    nl, Nj = xc.n, j.n
    aj = j.alpha
    kj = len(j.xcl)
    kx1_star = kx1 + 1 + (kj == 2)
    # destinations of the reverse Move 3: the original clusters, j without the block
    lq_rev = [ch.ly_cond(xc.mask, h) if h is not j else ch.ly_cond(xc.mask, j, j.mask & ~xc.mask)
              for h in ch.clusters]
    lp = (gammaln(Nj - nl) + gammaln(nl) - gammaln(Nj)
          + gammaln(aj + Nj) + gammaln(alpha) - gammaln(aj + Nj - nl) - gammaln(alpha + nl)
          + math.log(ch.alpha_theta) + math.log(alpha) - math.log(aj)
          + ch.ly_ml(xc.mask, params) - logsumexp(lq_rev) + math.log(kx2p))
    if ch.config.printed_ratios:
        lp -= math.log(kx1) if kx1 > 0 else -math.inf
    else:
        kx2p_star = kx2p - (2 if kj == 2 else 1)
        lp += (-math.log(kx1_star) + math.log(1.0 - rho2(kx1_star, kx2p_star))
               - math.log(rho2(kx1, kx2p)))
    acc = math.log(ch.rng.random()) < lp
    if acc:
        c = ch.new_ycluster(params, alpha)
        _relocate(ch, xc, j, c)
    ch.stats.record('move2', acc)
    return acc


def move3(ch):
    single = [c for c in ch.clusters if len(c.xcl) == 1]
    if not single or len(ch.clusters) < 2:
        return False
    kx1 = len(single)
    kx2p = ch.kx2plus()
    j = single[int(ch.rng.random() * kx1)]
    xc = j.xcl[0]
    others = [h for h in ch.clusters if h is not j]
    lq = [ch.ly_cond(j.mask, h) for h in others]
    ih = sample_log(lq, ch.rng.random())
    h = others[ih]
    Nj, Nh = j.n, h.n
    aj, ah = j.alpha, h.alpha
    kh = len(h.xcl)
    kx2p_star = kx2p + 1 + (kh == 1)
    lp = (gammaln(Nh + Nj) - gammaln(Nh) - gammaln(Nj)
          + gammaln(aj + Nj) + gammaln(ah + Nh) - gammaln(ah + Nh + Nj) - gammaln(aj)
          - math.log(ch.alpha_theta) + math.log(ah) - math.log(aj)
          + math.log(kx1) - math.log(kx2p_star)
          + logsumexp(lq) - ch.ly_cluster(j))
    if not ch.config.printed_ratios:
        kx1_star = kx1 - 1 - (kh == 1)
        lp += math.log(rho2(kx1_star, kx2p_star)) - math.log(1.0 - rho2(kx1, kx2p))
    acc = math.log(ch.rng.random()) < lp
    if acc:
        _relocate(ch, xc, j, h)
    ch.stats.record('move3', acc)
    return acc
