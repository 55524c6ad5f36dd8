"""Hamiltonian Monte Carlo for the GP expert parameters of each y-cluster."""
import math

import numpy as np

from edpmoe import gp
from edpmoe.model import ExpertParams
from edpmoe.sampler.chain import bits

__all__ = ['StepSizeAdapter', 'hmc_trajectory', 'hmc_update_experts']


class StepSizeAdapter(object):
    """Dual averaging of log step size towards a target acceptance rate."""

    def __init__(self, step_size, target=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.eps = float(step_size)
        self.mu = math.log(10.0 * step_size)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.hbar = 0.0
        self.log_eps_bar = math.log(step_size)
        self.t = 0

    def update(self, accept_prob):
        self.t += 1
        t = self.t
        w = 1.0 / (t + self.t0)
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(t) / self.gamma * self.hbar
        log_eps = min(max(log_eps, math.log(1e-4)), math.log(2.0))
        eta = t ** (-self.kappa)
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar
        self.eps = math.exp(log_eps)

    def freeze(self):
        self.eps = math.exp(self.log_eps_bar)


def hmc_trajectory(logp_grad, u0, free, eps, n_steps, rng):
    """One HMC transition over the coordinates ``free`` of ``u0``.

    Returns (new u, accepted, acceptance probability, |Delta H|). A trajectory
    that reaches a non-finite Hamiltonian or fails numerically is rejected.
    """
    u0 = np.asarray(u0, dtype=float)
    p0 = rng.standard_normal(len(free))
    if n_steps == 0 or len(free) == 0:
        return u0.copy(), True, 1.0, 0.0
    try:
        # divergent trajectories overflow harmlessly; they are rejected below
        with np.errstate(over='ignore', invalid='ignore'):
            lp0, g = logp_grad(u0)
            h0 = -lp0 + 0.5 * float(p0 @ p0)
            u = u0.copy()
            p = p0 + 0.5 * eps * g[free]
            for i in range(n_steps):
                u[free] += eps * p
                lp, g = logp_grad(u)
                if i < n_steps - 1:
                    p += eps * g[free]
            p += 0.5 * eps * g[free]
            h1 = -lp + 0.5 * float(p @ p)
    except (gp.NumericalError, ValueError, FloatingPointError, OverflowError, np.linalg.LinAlgError):
        return u0.copy(), False, 0.0, math.inf
    if not (math.isfinite(h1) and np.all(np.isfinite(u))):
        return u0.copy(), False, 0.0, math.inf
    dh = h1 - h0
    a = math.exp(min(0.0, -dh))
    if rng.random() < a:
        return u, True, a, abs(dh)
    return u0.copy(), False, a, abs(dh)


def hmc_update_experts(ch, adapter=None):
    """One trajectory per y-cluster for (log sigma2, beta0, log s_f^2, log l_d)."""
    priors = ch.param_priors
    free = np.array([i for i, p in enumerate(priors) if not p.fixed], dtype=int)
    if len(free) == 0:
        return
    hs = ch.priors.hmc
    eps = adapter.eps if adapter is not None else hs.step_size
    for c in ch.clusters:
        idx = bits(c.mask)
        y = ch.ytil[idx]
        X = ch.X[idx]
        sqd = gp.sq_diffs(X)

        def f(u):
            with np.errstate(over='raise', invalid='raise', divide='raise'):
                return gp.grad_log_posterior(y, X, u, priors, sqd)
        u, acc, a, dh = hmc_trajectory(f, c.params.to_unconstrained(), free, eps, hs.n_leapfrog, ch.rng)
        if acc:
            c.params = ExpertParams.from_unconstrained(u)
            c.cache = None
        if not math.isfinite(dh):
            ch.stats.record('hmc_divergent', True)
        ch.stats.record('hmc', acc)
        if adapter is not None:
            adapter.update(a)
