"""Local collapsed Gibbs updates of the allocation variables.

Auxiliary-parameter scheme for the non-conjugate expert (m fresh candidate
y-clusters per step) combined with collapsed updates for the conjugate input
models, extended to the nested partition.
"""
import math

from edpmoe.sampler.util import sample_log

__all__ = ['gibbs_sweep', 'gibbs_step']


def gibbs_sweep(chain):
    for n in range(chain.N):
        gibbs_step(chain, n)
    return chain


def gibbs_step(ch, n):
    rng = ch.rng
    dp = ch.config.dp
    m = ch.priors.m
    b = 1 << n
    c0 = ch.ay[n]
    xc0 = ch.ax[n]
    singleton_y = c0.n == 1

    # y-likelihoods of point n under every other occupied cluster (n excluded)
    live = [c for c in ch.clusters if not (singleton_y and c is c0)]
    ly = [ch.ly_point(n, c) for c in live]

    # detach n; the cluster objects survive so they can be restored cheaply
    x_n = ch.X[n]
    pred0 = xc0.stats.pred if ch.track_stats else None
    c0.mask &= ~b
    c0.n -= 1
    xc0.mask &= ~b
    xc0.n -= 1
    if ch.track_stats:
        ch.im.remove(xc0.stats, x_n)

    opts = []
    lw = []
    lx0 = ch.lx0[n]
    for c, lyc in zip(live, ly):
        Nj = c.n
        xcs = [xc for xc in c.xcl if xc.n > 0]
        lxs = ch.lx_points(n, xcs)
        if dp:
            opts.append((c, xcs[0]))
            lw.append(math.log(Nj) + lyc + lxs[0])
            continue
        denom = math.log(c.alpha + Nj)
        for xc, lx in zip(xcs, lxs):
            opts.append((c, xc))
            lw.append(math.log(Nj * xc.n) - denom + lyc + lx)
        opts.append((c, None))
        lw.append(math.log(Nj * c.alpha) - denom + lyc + lx0)

    cands = []
    if singleton_y:
        cands.append((c0.params, c0.alpha))
    while len(cands) < m:
        cands.append(ch.new_params())
    la = math.log(ch.alpha_theta / m)
    for p, a in cands:
        opts.append((None, (p, a)))
        lw.append(la + ch.ly_new(n, p) + lx0)

    choice = opts[sample_log(lw, rng.random())]
    c, xc = choice

    if c is None and singleton_y and choice[1] is cands[0]:
        c = c0
        xc = xc0
    if c is c0:
        # same y-cluster: restore membership, keep the GP cache
        c0.mask |= b
        c0.n += 1
        if xc is None:
            xc = xc0 if xc0.n == 0 else ch.new_xcluster(c0)
        elif xc0.n == 0 and xc is not xc0:
            c0.xcl.remove(xc0)
        xc.mask |= b
        xc.n += 1
        if ch.track_stats:
            ch.im.add(xc.stats, x_n)
            if xc is xc0:
                # same statistics as before the detach
                xc.stats.pred = pred0
        ch.ax[n] = xc
        return

    c0.cache = None
    if xc0.n == 0:
        c0.xcl.remove(xc0)
    if c0.n == 0:
        ch.clusters.remove(c0)
    if c is None:
        p, a = choice[1]
        c = ch.new_ycluster(p, a)
        xc = None
    if xc is None:
        xc = ch.new_xcluster(c)
    ch.add_point(n, c, xc)
