"""Tensor Monte Carlo marginal-likelihood estimation."""
from .estimators import (
    estimate,
    estimate_batch,
    estimate_iwae,
    estimate_smc,
    estimate_tmc,
    estimate_tmc_nonfactorised,
    estimate_vae,
)
from .factorgraph import FactorGraph, build_directed_factors, eliminate_variable, evaluate, greedy_order
from .logtensor import LogTensor, contract, log_mul, logmmexp, logsumexp_reduce
from .models import (
    DiscreteModel,
    GaussianChain,
    HierarchicalGaussian,
    ProposalSpec,
    marginal_proposal,
    prior_proposal,
    sample_latents,
)

__version__ = "0.1.0"
