"""Enriched Dirichlet process mixtures of generalised Gaussian-process experts."""
from edpmoe.model import (BinomialBeta, CategoricalDirichlet, ConcentrationParams, Dataset,
                          ExpertParams, GaussianNIG, GaussianOutput, NestedPartition,
                          OrdinalProbit, PosteriorDraws, PriorConfig, SamplerState, recount)
from edpmoe.priors import Fixed, Gamma, LogNormal, Normal

__version__ = '0.1.0'
