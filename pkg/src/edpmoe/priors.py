"""Scalar prior distributions used for expert and concentration parameters.

Positive parameters are sampled by HMC on the log scale, so each positive
prior also exposes its density (and gradient) with respect to ``u = log x``,
Jacobian included.
"""
import math

import numpy as np
from scipy.special import gammaln

__all__ = ['Gamma', 'LogNormal', 'Normal', 'Fixed', 'prior_from_dict']

_LOG_2PI = math.log(2.0 * math.pi)


class Gamma(object):
    """Gamma(shape, rate); mean shape / rate."""

    positive = True
    fixed = False

    def __init__(self, shape, rate):
        if not (shape > 0 and rate > 0):
            raise ValueError(f'Gamma requires shape > 0 and rate > 0, got ({shape}, {rate})')
        self.shape = float(shape)
        self.rate = float(rate)

    @classmethod
    def from_convention(cls, a, b, convention='shape-rate'):
        if convention == 'shape-rate':
            return cls(a, b)
        if convention == 'shape-scale':
            return cls(a, 1.0 / b)
        raise ValueError(f'unknown gamma convention {convention!r}')

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def logpdf(self, x):
        return (self.shape * math.log(self.rate) - gammaln(self.shape)
                + (self.shape - 1.0) * np.log(x) - self.rate * x)

    def logpdf_log(self, u):
        # density of u = log x
        return (self.shape * math.log(self.rate) - gammaln(self.shape)
                + self.shape * u - self.rate * np.exp(u))

    def grad_logpdf_log(self, u):
        return self.shape - self.rate * np.exp(u)

    @property
    def mean(self):
        return self.shape / self.rate

    def to_dict(self):
        return {'dist': 'gamma', 'shape': self.shape, 'rate': self.rate}

    def __repr__(self):
        return f'Gamma(shape={self.shape:g}, rate={self.rate:g})'


class LogNormal(object):
    """log x ~ N(mu, sd^2)."""

    positive = True
    fixed = False

    def __init__(self, mu, sd):
        if not sd > 0:
            raise ValueError(f'LogNormal requires sd > 0, got {sd}')
        self.mu = float(mu)
        self.sd = float(sd)

    def sample(self, rng, size=None):
        return np.exp(rng.normal(self.mu, self.sd, size=size))

    def logpdf(self, x):
        u = np.log(x)
        return self.logpdf_log(u) - u

    def logpdf_log(self, u):
        z = (u - self.mu) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI

    def grad_logpdf_log(self, u):
        return -(u - self.mu) / self.sd ** 2

    @property
    def mean(self):
        return math.exp(self.mu + 0.5 * self.sd ** 2)

    def to_dict(self):
        return {'dist': 'lognormal', 'mu': self.mu, 'sd': self.sd}

    def __repr__(self):
        return f'LogNormal(mu={self.mu:g}, sd={self.sd:g})'


class Normal(object):
    positive = False
    fixed = False

    def __init__(self, mu, sd):
        if not sd > 0:
            raise ValueError(f'Normal requires sd > 0, got {sd}')
        self.mu = float(mu)
        self.sd = float(sd)

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sd, size=size)

    def logpdf(self, x):
        z = (x - self.mu) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI

    def grad_logpdf(self, x):
        return -(x - self.mu) / self.sd ** 2

    @property
    def mean(self):
        return self.mu

    def to_dict(self):
        return {'dist': 'normal', 'mu': self.mu, 'sd': self.sd}

    def __repr__(self):
        return f'Normal(mu={self.mu:g}, sd={self.sd:g})'


class Fixed(object):
    """Point mass. Parameters with a fixed prior are never moved by HMC."""

    fixed = True

    def __init__(self, value):
        self.value = float(value)
        self.positive = self.value > 0

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def logpdf(self, x):
        return 0.0

    @property
    def mean(self):
        return self.value

    def to_dict(self):
        return {'dist': 'fixed', 'value': self.value}

    def __repr__(self):
        return f'Fixed({self.value:g})'


def prior_from_dict(d, convention='shape-rate'):
    """Build a prior from a config mapping such as ``{'dist': 'gamma', 'shape': 3, 'rate': 1}``.

    Gamma priors may alternatively be written ``{'dist': 'gamma', 'a': 10, 'b': 0.5}``,
    in which case ``b`` is read under ``convention``.
    """
    kind = str(d.get('dist', '')).lower()
    if kind == 'gamma':
        if 'shape' in d:
            if 'rate' in d:
                return Gamma(d['shape'], d['rate'])
            return Gamma(d['shape'], 1.0 / float(d['scale']))
        return Gamma.from_convention(d['a'], d['b'], convention)
    if kind == 'lognormal':
        return LogNormal(d['mu'], d['sd'])
    if kind == 'normal':
        return Normal(d['mu'], d['sd'])
    if kind == 'fixed':
        return Fixed(d['value'])
    raise ValueError(f'unknown prior distribution {kind!r}')
