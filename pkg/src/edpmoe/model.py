"""Domain types shared across the package.

Cluster labels are 0-based. A partition is canonical when y-labels appear in
order of first appearance and, within each y-cluster, x-labels do too.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from edpmoe.priors import Fixed, Gamma, LogNormal, Normal

__all__ = [
    'GaussianNIG', 'CategoricalDirichlet', 'BinomialBeta',
    'GaussianOutput', 'OrdinalProbit', 'Dataset',
    'NestedPartition', 'recount', 'ExpertParams', 'ConcentrationParams',
    'SamplerState', 'PosteriorDraws', 'HMCSettings', 'PriorConfig',
]


# ---------------------------------------------------------------------------
# input families

@dataclass(frozen=True)
class GaussianNIG:
    """Normal input with a normal-inverse-gamma prior on (mean, variance)."""
    u0: float = 0.0
    c: float = 0.25
    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.a > 0 and self.b > 0):
            raise ValueError(f'GaussianNIG requires c, a, b > 0, got {self}')

    @property
    def n_categories(self):
        return 0


@dataclass(frozen=True)
class CategoricalDirichlet:
    """Unordered input in {0..G} with a Dirichlet(gamma_0..gamma_G) prior."""
    gamma: Tuple[float, ...] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, 'gamma', tuple(float(g) for g in self.gamma))
        if len(self.gamma) < 2 or min(self.gamma) <= 0:
            raise ValueError(f'CategoricalDirichlet needs >= 2 positive weights, got {self.gamma}')

    @property
    def G(self):
        return len(self.gamma) - 1

    @property
    def n_categories(self):
        return len(self.gamma)


@dataclass(frozen=True)
class BinomialBeta:
    """Ordered input in {0..G}, Binomial(G, p) with p ~ Beta(gamma0, gamma1)."""
    G: int = 1
    gamma0: float = 1.0
    gamma1: float = 1.0

    def __post_init__(self):
        if int(self.G) != self.G or self.G < 1:
            raise ValueError(f'BinomialBeta requires integer G >= 1, got {self.G}')
        if not (self.gamma0 > 0 and self.gamma1 > 0):
            raise ValueError('BinomialBeta requires positive gamma0, gamma1')

    @property
    def n_categories(self):
        return 0


# ---------------------------------------------------------------------------
# outputs

@dataclass(frozen=True)
class GaussianOutput:
    kind: str = 'gaussian'


@dataclass(frozen=True)
class OrdinalProbit:
    """Ordered categories 0..L observed through a latent Gaussian and fixed cutoffs.

    ``cutoffs`` holds eps_0 = 0 < eps_1 < ... < eps_{L-1}.
    """
    cutoffs: Tuple[float, ...] = (0.0,)
    kind: str = 'ordinal'

    def __post_init__(self):
        cut = tuple(float(c) for c in self.cutoffs)
        object.__setattr__(self, 'cutoffs', cut)
        if len(cut) < 1 or cut[0] != 0.0:
            raise ValueError('ordinal cutoffs must start at 0')
        if any(b <= a for a, b in zip(cut, cut[1:])):
            raise ValueError('ordinal cutoffs must be strictly increasing')

    @classmethod
    def unit_spaced(cls, L):
        return cls(tuple(float(l) for l in range(L)))

    @property
    def L(self):
        return len(self.cutoffs)

    def interval(self, y):
        """Latent interval (lower, upper] implied by category ``y`` (arrays allowed)."""
        edges = np.concatenate([[-np.inf], self.cutoffs, [np.inf]])
        y = np.asarray(y, dtype=int)
        return edges[y], edges[y + 1]

    def categorise(self, latent):
        """Deterministic map from latent value(s) to category."""
        return np.searchsorted(np.asarray(self.cutoffs), latent, side='left')


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    output: object = field(default_factory=GaussianOutput)
    input_spec: Optional[List[object]] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[0] == 1 and np.ndim(self.y) == 1 and len(self.y) > 1:
            self.X = self.X.T
        self.y = np.asarray(self.y, dtype=float).ravel()
        N, D = self.X.shape
        if N < 1 or D < 1:
            raise ValueError('dataset needs N >= 1 and D >= 1')
        if self.y.shape[0] != N:
            raise ValueError(f'{N} input rows but {self.y.shape[0]} outputs')
        if self.input_spec is None:
            self.input_spec = default_input_spec(self.X)
        if len(self.input_spec) != D:
            raise ValueError(f'input_spec has {len(self.input_spec)} entries for D={D}')
        for d, spec in enumerate(self.input_spec):
            col = self.X[:, d]
            if isinstance(spec, (CategoricalDirichlet, BinomialBeta)):
                if np.any(col != np.round(col)) or col.min() < 0 or col.max() > spec.G:
                    raise ValueError(f'input column {d} must hold integer codes in 0..{spec.G}')
        if isinstance(self.output, OrdinalProbit):
            if np.any(self.y != np.round(self.y)) or self.y.min() < 0 or self.y.max() > self.output.L:
                raise ValueError(f'ordinal outputs must be integers in 0..{self.output.L}')

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    @property
    def is_ordinal(self):
        return isinstance(self.output, OrdinalProbit)


def default_input_spec(X, c=0.25, a=2.0, b=1.0):
    """NIG input model per column centred on the column mean."""
    X = np.atleast_2d(X)
    return [GaussianNIG(u0=float(X[:, d].mean()), c=c, a=a, b=b) for d in range(X.shape[1])]


# ---------------------------------------------------------------------------
# partitions

def _first_appearance(labels):
    labels = np.asarray(labels)
    out = np.empty(labels.shape[0], dtype=int)
    seen = {}
    for i, v in enumerate(labels.tolist()):
        if v not in seen:
            seen[v] = len(seen)
        out[i] = seen[v]
    return out


@dataclass
class NestedPartition:
    """Allocation ``z_n = (zy[n], zx[n])``; zx indexes the x-cluster inside y-cluster zy."""
    zy: np.ndarray
    zx: np.ndarray

    def __post_init__(self):
        self.zy = np.asarray(self.zy, dtype=int).copy()
        self.zx = np.asarray(self.zx, dtype=int).copy()
        if self.zy.shape != self.zx.shape:
            raise ValueError('zy and zx must have equal length')

    @property
    def N(self):
        return self.zy.shape[0]

    @property
    def k(self):
        return len(np.unique(self.zy))

    def sizes(self):
        """N_j for every y-label present, in label order."""
        _, counts = np.unique(self.zy, return_counts=True)
        return counts

    def xsizes(self):
        """List over y-clusters of arrays N_{l|j}."""
        out = []
        for j in np.unique(self.zy):
            _, c = np.unique(self.zx[self.zy == j], return_counts=True)
            out.append(c)
        return out

    def kj(self):
        return np.array([len(c) for c in self.xsizes()], dtype=int)

    @property
    def kx2plus(self):
        kj = self.kj()
        return int(np.sum(kj[kj > 1]))

    @property
    def kx1(self):
        return int(np.sum(self.kj() == 1))

    @property
    def kx1plus(self):
        return int(sum(np.sum(c > 1) for c in self.xsizes()))

    def canonical(self):
        return recount(self)

    def key(self):
        """Hashable canonical form (used to compare partitions)."""
        p = recount(self)
        return tuple(zip(p.zy.tolist(), p.zx.tolist()))

    def flat_x(self):
        """Single-level labels of the x-clusters (pairs (j, l) enumerated)."""
        return _first_appearance(self.zy * (self.zx.max() + 1 if self.N else 1) + self.zx)

    def __eq__(self, other):
        if not isinstance(other, NestedPartition):
            return NotImplemented
        return self.key() == other.key()


def recount(partition):
    """Relabel a nested partition into canonical order-of-appearance form."""
    zy = _first_appearance(partition.zy)
    zx = np.empty_like(zy)
    for j in range(zy.max() + 1 if zy.size else 0):
        idx = np.flatnonzero(zy == j)
        zx[idx] = _first_appearance(partition.zx[idx])
    return NestedPartition(zy, zx)


# ---------------------------------------------------------------------------
# parameters and state

@dataclass
class ExpertParams:
    """GP expert: noise variance, constant mean and ARD squared-exponential kernel."""
    sigma2: float
    beta0: float
    magnitude: float
    lengthscales: np.ndarray

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        vals = [self.sigma2, self.magnitude, *self.lengthscales]
        if not all(np.isfinite(v) and v > 0 for v in vals) or not np.isfinite(self.beta0):
            raise ValueError(f'invalid expert parameters {self}')

    @classmethod
    def trusted(cls, sigma2, beta0, magnitude, lengthscales):
        """Construct without validation, for values drawn from proper priors."""
        obj = object.__new__(cls)
        obj.sigma2 = sigma2
        obj.beta0 = beta0
        obj.magnitude = magnitude
        obj.lengthscales = lengthscales
        return obj

    @property
    def D(self):
        return self.lengthscales.shape[0]

    def to_unconstrained(self):
        return np.concatenate([[np.log(self.sigma2), self.beta0, np.log(self.magnitude)],
                               np.log(self.lengthscales)])

    @classmethod
    def from_unconstrained(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(float(np.exp(u[0])), float(u[1]), float(np.exp(u[2])), np.exp(u[3:]))

    def copy(self):
        return ExpertParams(self.sigma2, self.beta0, self.magnitude, self.lengthscales.copy())

    def to_dict(self):
        return {'sigma2': self.sigma2, 'beta0': self.beta0, 'magnitude': self.magnitude,
                'lengthscales': self.lengthscales.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d['sigma2'], d['beta0'], d['magnitude'], d['lengthscales'])


@dataclass
class ConcentrationParams:
    alpha_theta: float
    alpha_psi: np.ndarray

    def __post_init__(self):
        self.alpha_psi = np.atleast_1d(np.asarray(self.alpha_psi, dtype=float)).copy()
        if not self.alpha_theta > 0 or np.any(self.alpha_psi <= 0):
            raise ValueError('concentration parameters must be positive')


@dataclass
class SamplerState:
    """One retained MCMC iterate in canonical label order."""
    partition: NestedPartition
    experts: List[ExpertParams]
    conc: ConcentrationParams
    latent: np.ndarray
    iteration: int = -1

    def __post_init__(self):
        if len(self.experts) != self.partition.k:
            raise ValueError('one expert per y-cluster required')
        if self.conc.alpha_psi.shape[0] != self.partition.k:
            raise ValueError('one alpha_psi per y-cluster required')

    @property
    def k(self):
        return self.partition.k

    def to_record(self):
        p = self.partition
        return {
            'iteration': int(self.iteration),
            'k': int(p.k),
            'kj': p.kj().tolist(),
            'alpha_theta': float(self.conc.alpha_theta),
            'alpha_psi': self.conc.alpha_psi.tolist(),
            'experts': [e.to_dict() for e in self.experts],
            'zy': p.zy.tolist(),
            'zx': p.zx.tolist(),
            'latent': np.asarray(self.latent).tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(NestedPartition(rec['zy'], rec['zx']),
                   [ExpertParams.from_dict(e) for e in rec['experts']],
                   ConcentrationParams(rec['alpha_theta'], rec['alpha_psi']),
                   np.asarray(rec['latent'], dtype=float),
                   rec.get('iteration', -1))


@dataclass
class PosteriorDraws:
    states: List[SamplerState]
    move_stats: Optional[dict] = None
    seed: Optional[int] = None
    mode: str = 'edp'

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def partitions(self):
        return [s.partition for s in self.states]

    def k_trace(self):
        return np.array([s.k for s in self.states])


# ---------------------------------------------------------------------------
# priors / configuration

@dataclass
class HMCSettings:
    n_leapfrog: int = 10
    step_size: float = 0.05
    target_accept: float = 0.8
    adapt: bool = True


@dataclass
class PriorConfig:
    """Priors for the GP experts and concentration parameters plus auxiliary settings.

    ``lengthscales`` holds one prior per input dimension; when shorter than D
    its last entry is reused for the remaining dimensions.
    """
    sigma2: object = field(default_factory=lambda: LogNormal(np.log(0.01), 0.5))
    beta0: object = field(default_factory=lambda: Normal(0.0, 0.5))
    magnitude: object = field(default_factory=lambda: Gamma(2.0, 1.5))
    lengthscales: Sequence[object] = field(default_factory=lambda: (Gamma(3.0, 1.0), Gamma(10.0, 0.5)))
    alpha_theta: object = field(default_factory=lambda: Gamma(1.0, 1.0))
    alpha_psi: object = field(default_factory=lambda: Gamma(1.0, 1.0))
    hmc: HMCSettings = field(default_factory=HMCSettings)
    m: int = 3
    S: int = 1000

    def __post_init__(self):
        if self.m < 1 or self.S < 1:
            raise ValueError('m and S must be >= 1')
        self.lengthscales = tuple(self.lengthscales)
        if not self.lengthscales:
            raise ValueError('at least one length-scale prior is required')

    def lengthscale_prior(self, d):
        return self.lengthscales[min(d, len(self.lengthscales) - 1)]

    def param_priors(self, D):
        """Priors in unconstrained-coordinate order (sigma2, beta0, magnitude, l_1..l_D)."""
        return [self.sigma2, self.beta0, self.magnitude] + [self.lengthscale_prior(d) for d in range(D)]

    def sample_expert(self, rng, D):
        ls = np.array([self.lengthscale_prior(d).sample(rng) for d in range(D)], dtype=float)
        return ExpertParams(float(self.sigma2.sample(rng)), float(self.beta0.sample(rng)),
                            float(self.magnitude.sample(rng)), ls)

    def sample_experts(self, rng, D, size):
        """``size`` independent prior draws, sampled in vectorised form."""
        s2 = np.broadcast_to(self.sigma2.sample(rng, size=size), (size,))
        b0 = np.broadcast_to(self.beta0.sample(rng, size=size), (size,))
        mg = np.broadcast_to(self.magnitude.sample(rng, size=size), (size,))
        ls = np.empty((size, D))
        for d in range(D):
            ls[:, d] = self.lengthscale_prior(d).sample(rng, size=size)
        if not (np.all(s2 > 0) and np.all(mg > 0) and np.all(ls > 0)):
            raise ValueError('prior produced a non-positive expert parameter')
        return [ExpertParams.trusted(float(s2[i]), float(b0[i]), float(mg[i]), ls[i])
                for i in range(size)]

    def sample_alpha_psi(self, rng):
        return float(self.alpha_psi.sample(rng))

    @property
    def mu_beta(self):
        return self.beta0.mean
