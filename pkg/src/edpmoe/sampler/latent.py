"""Latent Gaussian outputs for ordinal probit experts."""
import math

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import log_ndtr, ndtri_exp

from edpmoe import gp
from edpmoe.sampler.chain import bits

__all__ = ['rtruncnorm', 'update_latent_outputs']


def rtruncnorm(mean, sd, lo, hi, u):
    """Inverse-CDF draw from N(mean, sd^2) restricted to (lo, hi] given a uniform ``u``.

    Works in log-CDF space and reflects intervals in the upper tail so that
    far-tail truncation stays accurate.
    """
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    flip = a > 0
    if flip:
        a, b = -b, -a
    la = log_ndtr(a)
    lb = log_ndtr(b)
    # log(Phi(a) + u (Phi(b) - Phi(a)))
    lt = lb + math.log(u + (1.0 - u) * math.exp(la - lb)) if lb > -math.inf else la
    z = float(ndtri_exp(lt))
    z = min(max(z, a), b)
    if flip:
        z = -z
    x = mean + sd * z
    # keep strictly inside (lo, hi]
    if not x > lo:
        x = np.nextafter(lo, math.inf)
    if x > hi:
        x = hi
    return x


def update_latent_outputs(ch):
    """Single-site Gibbs over each cluster's latent outputs (no-op for Gaussian data)."""
    if not ch.ordinal:
        return
    for c in ch.clusters:
        idx = bits(c.mask)
        p = c.params
        C = gp.kernel_matrix(ch.X[idx], ch.X[idx], p)
        C[np.diag_indices_from(C)] += p.sigma2
        L, _ = gp.cholesky_jitter(C)
        Q = cho_solve((L, True), np.eye(len(idx)), check_finite=False)
        y = ch.ytil[idx].copy()
        a = Q @ (y - p.beta0)
        for k, i in enumerate(idx):
            q = Q[k, k]
            mean = y[k] - a[k] / q
            new = rtruncnorm(mean, 1.0 / math.sqrt(q), ch.lo[i], ch.hi[i], ch.rng.random())
            d = new - y[k]
            if d != 0.0:
                a += Q[:, k] * d
                y[k] = new
        ch.ytil[idx] = y
        c.cache = None
