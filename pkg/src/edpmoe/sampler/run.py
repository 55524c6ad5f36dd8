"""Top-level MCMC loop."""
import json
import logging
import time

import numpy as np

from edpmoe.model import PosteriorDraws
from edpmoe.priors import Fixed, Gamma
from edpmoe.sampler.chain import Chain, SamplerConfig
from edpmoe.sampler.concentration import update_concentrations
from edpmoe.sampler.gibbs import gibbs_sweep
from edpmoe.sampler.hmc import StepSizeAdapter, hmc_update_experts
from edpmoe.sampler.latent import update_latent_outputs
from edpmoe.sampler.splitmerge import splitmerge_step
from edpmoe.sampler.ymoves import ymove_step

__all__ = ['Sampler', 'run']

logger = logging.getLogger(__name__)


class Sampler(object):
    """Runs one chain. ``step`` performs a single iteration of the full kernel."""

    def __init__(self, data, priors=None, config=None, state=None):
        config = config if config is not None else SamplerConfig()
        for name in ('alpha_theta', 'alpha_psi'):
            pr = getattr(priors, name, None)
            if pr is not None and not isinstance(pr, (Gamma, Fixed)):
                raise ValueError(f'{name} prior must be Gamma or Fixed')
        self.config = config
        rng = np.random.default_rng(config.seed)
        if state is None:
            self.chain = Chain(data, priors, config, rng).init_state()
        else:
            self.chain = Chain.from_state(data, state, priors, config, rng)
        hs = self.chain.priors.hmc
        self.adapter = StepSizeAdapter(hs.step_size, hs.target_accept) if hs.adapt else None
        self.iteration = 0

    def step(self):
        ch = self.chain
        cfg = self.config
        if cfg.gibbs:
            gibbs_sweep(ch)
        if cfg.ymoves:
            ymove_step(ch)
        if cfg.splitmerge:
            splitmerge_step(ch)
        if cfg.hmc:
            adapting = self.adapter is not None and self.iteration < cfg.burn_in
            hmc_update_experts(ch, self.adapter if adapting else None)
            if adapting and self.iteration == cfg.burn_in - 1:
                self.adapter.freeze()
                ch.priors.hmc.step_size = self.adapter.eps
        if cfg.concentrations:
            update_concentrations(ch)
        if cfg.latent:
            update_latent_outputs(ch)
        self.iteration += 1

    @property
    def step_size(self):
        if self.adapter is not None:
            return self.adapter.eps
        return self.chain.priors.hmc.step_size

    def run(self, trace_path=None, callback=None, log_every=500):
        cfg = self.config
        states = []
        fh = open(trace_path, 'w') if trace_path is not None else None
        t0 = time.time()
        try:
            while self.iteration < cfg.n_iter:
                it = self.iteration
                self.step()
                if callback is not None:
                    callback(self, it)
                if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                    st = self.chain.to_state(it)
                    states.append(st)
                    if fh is not None:
                        fh.write(json.dumps(st.to_record()) + '\n')
                if log_every and (it + 1) % log_every == 0:
                    logger.info('iteration %d/%d  k=%d  %.1fs', it + 1, cfg.n_iter,
                                len(self.chain.clusters), time.time() - t0)
        finally:
            if fh is not None:
                fh.close()
        stats = self.chain.stats.to_dict()
        return PosteriorDraws(states, stats, cfg.seed, cfg.mode)


def run(data, priors=None, config=None, trace_path=None):
    """Run one chain and return its retained draws."""
    return Sampler(data, priors, config).run(trace_path)
