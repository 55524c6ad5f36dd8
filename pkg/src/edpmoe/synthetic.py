"""Mixture of two damped cosines with input-dependent weights.

y | x ~ p(x_1) N(exp(b10 x_1) cos(b11 pi x_1), s1^2) + (1 - p(x_1)) N(exp(b20 x_1) cos(b21 pi x_1), s2^2)

where p(x_1) is the normalised ratio of two Gaussian bumps centred at mu1
and mu2. Only x_1 drives the output; the remaining inputs are correlated
nuisance dimensions.
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.stats import norm

from edpmoe.model import Dataset, OrdinalProbit, default_input_spec

__all__ = ['DampedCosineConfig', 'TrueDensity', 'generate', 'generate_ordinal', 'ordinalise',
           'input_covariance']


@dataclass
class DampedCosineConfig:
    N: int = 200
    D: int = 1
    seed: int = 0
    beta1: Tuple[float, float] = (0.1, 0.6)
    beta2: Tuple[float, float] = (-0.1, 0.4)
    sigma1: float = 0.15
    sigma2: float = 0.05
    tau1: float = 0.8
    tau2: float = 0.8
    mu1: float = 3.0
    mu2: float = 5.0
    x_mean: float = 4.0
    x_var: float = 4.0
    x_cov: float = 3.5

    def __post_init__(self):
        if self.N < 1 or self.D < 1:
            raise ValueError('N and D must be >= 1')
        if not (self.sigma1 > 0 and self.sigma2 > 0 and self.tau1 > 0 and self.tau2 > 0):
            raise ValueError('sigma and tau values must be positive')


def input_covariance(cfg):
    """x_var on the diagonal, x_cov between nuisance inputs, zero covariance with x_1."""
    S = np.full((cfg.D, cfg.D), cfg.x_cov)
    S[0, :] = 0.0
    S[:, 0] = 0.0
    np.fill_diagonal(S, cfg.x_var)
    return S


@dataclass
class TrueDensity:
    """The generating conditional law of y given x (only x_1 matters)."""
    cfg: DampedCosineConfig = field(default_factory=DampedCosineConfig)

    def weight(self, x1):
        c = self.cfg
        a = np.log(c.tau1) - 0.5 * c.tau1 * (np.asarray(x1) - c.mu1) ** 2
        b = np.log(c.tau2) - 0.5 * c.tau2 * (np.asarray(x1) - c.mu2) ** 2
        return 1.0 / (1.0 + np.exp(b - a))

    def means(self, x1):
        c = self.cfg
        x1 = np.asarray(x1, dtype=float)
        m1 = np.exp(c.beta1[0] * x1) * np.cos(c.beta1[1] * np.pi * x1)
        m2 = np.exp(c.beta2[0] * x1) * np.cos(c.beta2[1] * np.pi * x1)
        return m1, m2

    def pdf(self, y, x1):
        m1, m2 = self.means(x1)
        p = self.weight(x1)
        return p * norm.pdf(y, m1, self.cfg.sigma1) + (1 - p) * norm.pdf(y, m2, self.cfg.sigma2)

    def mean(self, x1):
        m1, m2 = self.means(x1)
        p = self.weight(x1)
        return p * m1 + (1 - p) * m2

    def sample(self, x1, rng):
        """Draw (y, component) for each entry of ``x1``; component 0 is the first cosine."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        p = self.weight(x1)
        comp = (rng.random(x1.shape[0]) >= p).astype(int)
        m1, m2 = self.means(x1)
        mean = np.where(comp == 0, m1, m2)
        sd = np.where(comp == 0, self.cfg.sigma1, self.cfg.sigma2)
        return mean + sd * rng.standard_normal(x1.shape[0]), comp


def sample_inputs(cfg, n, rng):
    L = np.linalg.cholesky(input_covariance(cfg))
    return cfg.x_mean + rng.standard_normal((n, cfg.D)) @ L.T


def generate(cfg, n_test=0):
    """Simulate a dataset.

    Returns (dataset, component labels, true density) and, when ``n_test`` > 0,
    additionally a held-out (X_test, y_test) pair drawn from the same law.
    """
    rng = np.random.default_rng(cfg.seed)
    X = sample_inputs(cfg, cfg.N, rng)
    truth = TrueDensity(cfg)
    y, comp = truth.sample(X[:, 0], rng)
    data = Dataset(X, y, input_spec=default_input_spec(X))
    if n_test > 0:
        Xt = sample_inputs(cfg, n_test, rng)
        yt, _ = truth.sample(Xt[:, 0], rng)
        return data, comp, truth, (Xt, yt)
    return data, comp, truth


def ordinalise(y, scale=2.0, shift=2.0, L=6):
    """Categories 0..L from the affine latent scale * y + shift and cutoffs 0, 1, ..., L-1."""
    out = OrdinalProbit.unit_spaced(L)
    return out.categorise(scale * np.asarray(y, dtype=float) + shift), out


def generate_ordinal(cfg, n_test=0, scale=2.0, shift=2.0, L=6):
    """Ordinal version of ``generate``: the damped-cosine outputs are mapped
    affinely and discretised with unit-spaced cutoffs."""
    res = generate(cfg, n_test)
    data = res[0]
    cat, output = ordinalise(data.y, scale, shift, L)
    odata = Dataset(data.X, cat, output, data.input_spec)
    if n_test > 0:
        Xt, yt = res[3]
        return odata, res[1], res[2], (Xt, ordinalise(yt, scale, shift, L)[0])
    return odata, res[1], res[2]
