"""MCMC engine for the enriched (and plain) DP mixture of GP experts."""
from edpmoe.sampler.chain import Chain, MoveStats, SamplerConfig
from edpmoe.sampler.concentration import escobar_west, update_concentrations
from edpmoe.sampler.gibbs import gibbs_step, gibbs_sweep
from edpmoe.sampler.hmc import StepSizeAdapter, hmc_trajectory, hmc_update_experts
from edpmoe.sampler.latent import rtruncnorm, update_latent_outputs
from edpmoe.sampler.run import Sampler, run
from edpmoe.sampler.splitmerge import dumb_merge, dumb_split, smart_merge, smart_split, splitmerge_step
from edpmoe.sampler.ymoves import move1, move2, move3, ymove_step
