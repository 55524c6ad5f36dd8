"""Auxiliary-variable updates for the DP concentration parameters.

With a Gamma(u, v) prior (shape, rate), the conditional of alpha given k
occupied clusters among n items is, after introducing xi ~ Beta(alpha + 1, n),
a two-component mixture of Gamma(u + k - 1, v - log xi) and
Gamma(u + k, v - log xi).
"""
import math

from edpmoe.priors import Fixed, Gamma

__all__ = ['escobar_west', 'update_concentrations']


def escobar_west(alpha, k, n, prior, rng):
    """One auxiliary-variable draw of a concentration parameter."""
    if isinstance(prior, Fixed):
        return prior.value
    if not isinstance(prior, Gamma):
        raise TypeError('concentration updates need a Gamma or Fixed prior')
    u, v = prior.shape, prior.rate
    xi = rng.beta(alpha + 1.0, n)
    v_hat = v - math.log(xi)
    s = u + k - 1.0
    shape = s if rng.random() < n * v_hat / (n * v_hat + s) else s + 1.0
    return max(float(rng.gamma(shape, 1.0 / v_hat)), 1e-300)


def update_concentrations(ch):
    ch.alpha_theta = escobar_west(ch.alpha_theta, len(ch.clusters), ch.N, ch.priors.alpha_theta, ch.rng)
    if ch.config.dp:
        return
    for c in ch.clusters:
        c.alpha = escobar_west(c.alpha, len(c.xcl), c.n, ch.priors.alpha_psi, ch.rng)
