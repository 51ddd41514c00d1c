"""Marginal-likelihood estimators: VAE, IWAE, TMC (factorised and not), SMC.

Every estimator returns the log of an estimate that is unbiased for the
evidence in the exp domain.  The ``*_batch`` helpers evaluate many seeds at
once by carrying a batch axis through the same factor-graph code; seed ``s``
in a batch gives the same draws as a scalar call with ``seed=s``.
"""
from __future__ import annotations

import math

import numpy as np

from . import rng
from .errors import DegenerateParticlesError, ModelError
from .factorgraph import build_directed_factors, evaluate, evaluate_tensor
from .logtensor import _lse
from .models import FACTORISED, LinearGaussianModel, ProposalSpec, normal_logpdf, sample_latents

METHODS = ("vae", "iwae", "tmc", "tmc-nonfactorised", "smc")


def _graph_estimate(model, proposal, K, seed, shared_axis):
    samples = sample_latents(model, proposal, K, seed, shared_axis=shared_axis)
    g = build_directed_factors(model, samples)
    if samples.batched:
        return evaluate_tensor(g).data.copy()
    return evaluate(g)


def _require_factorised(model, proposal):
    if getattr(model, "discrete", False):
        return
    if proposal is None or proposal.kind != FACTORISED:
        raise ModelError("this estimator needs a factorised proposal")


def estimate_vae(model, proposal: ProposalSpec, seed) -> float:
    """Single-sample estimate log P(x, z) - log Q(z)."""
    return estimate_iwae(model, proposal, 1, seed)


def estimate_iwae(model, proposal: ProposalSpec, K: int, seed) -> float:
    """log of the mean of K joint importance weights."""
    _require_factorised(model, proposal)
    if K < 1:
        raise ModelError("K must be >= 1")
    # IWAE is TMC in which every latent shares one sample index
    return _graph_estimate(model, proposal, int(K), seed, shared_axis=True)


def estimate_tmc(model, proposal: ProposalSpec, K, seed) -> float:
    """log of the average importance weight over all prod(K_i) sample combinations."""
    _require_factorised(model, proposal)
    return _graph_estimate(model, proposal, K, seed, shared_axis=False)


def estimate_tmc_nonfactorised(model, proposal: ProposalSpec, K, seed) -> float:
    proposal.order()
    return _graph_estimate(model, proposal, K, seed, shared_axis=False)


def estimate_smc(model: LinearGaussianModel, proposal: ProposalSpec, K: int, seed) -> float:
    """Bootstrap particle filter over latents in index order.

    Each step proposes from the latent's proposal, weights by the incremental
    prior/likelihood ratio, and resamples multinomially before the next step.
    Returns sum_t log(mean weight_t).
    """
    batched = not np.isscalar(seed)
    out = _smc(model, proposal, int(K), rng.seed_array(seed))
    return out if batched else float(out[0])


def _smc(model, proposal, K, seeds):
    if not isinstance(model, LinearGaussianModel):
        raise ModelError("SMC needs a sequential Gaussian model")
    if K < 1:
        raise ModelError("K must be >= 1")
    n = model.n_latents
    B = len(seeds)
    attach = {}
    for m, node in enumerate(model.observations):
        attach.setdefault(max(node.parents, default=0), []).append(m)
    for j, node in enumerate(proposal.nodes):
        if any(p >= j for p in node.parents):
            raise ModelError("SMC proposal may only condition on earlier latents")
    Z = np.zeros((B, K, n))
    counter = np.arange(K, dtype=np.uint64)[None, :]
    rows = np.arange(B)[:, None]
    total = np.zeros(B)
    for t in range(n):
        qnode = proposal.nodes[t]
        qmean = qnode.mean([Z[:, :, p] for p in qnode.parents])
        eps = rng.normal(seeds[:, None], rng.stream_id(rng.PROPOSAL, t), counter)
        z = qmean + qnode.std * eps
        Z[:, :, t] = z
        pnode = model.latents[t]
        logw = normal_logpdf(z, pnode.mean([Z[:, :, p] for p in pnode.parents]), pnode.var)
        logw = logw - normal_logpdf(z, qmean, qnode.var)
        for m in attach.get(t, ()):
            onode = model.observations[m]
            logw = logw + normal_logpdf(model.data[m], onode.mean([Z[:, :, p] for p in onode.parents]), onode.var)
        logw = np.broadcast_to(logw, (B, K))
        if np.isneginf(logw).all(axis=1).any():
            raise DegenerateParticlesError(f"all particle weights vanished at step {t}")
        lse = _lse(logw, 1)
        total += lse - math.log(K)
        if t < n - 1 and K > 1:
            probs = np.exp(logw - lse[:, None])
            cdf = np.cumsum(probs, axis=1)
            cdf[:, -1] = 1.0
            u = rng.uniform(seeds[:, None], rng.stream_id(rng.RESAMPLE, t), counter)
            # row offsets turn B searches into one over a globally sorted array
            offset = np.arange(B, dtype=np.float64)[:, None] * 2.0
            anc = np.searchsorted((cdf + offset).ravel(), (u + offset).ravel(), side="right")
            anc = np.minimum(anc.reshape(B, K) - rows * K, K - 1)
            Z = Z[rows, anc]
    return total


_SCALAR = {
    "iwae": estimate_iwae,
    "tmc": estimate_tmc,
    "tmc-nonfactorised": estimate_tmc_nonfactorised,
    "smc": estimate_smc,
}


def estimate(method: str, model, proposal, K, seed):
    """Dispatch by method name; ``seed`` may be an int or a sequence of seeds."""
    if method == "vae":
        return estimate_vae(model, proposal, seed)
    try:
        fn = _SCALAR[method]
    except KeyError:
        raise ModelError(f"unknown estimator {method!r}") from None
    return fn(model, proposal, K, seed)


def _bytes_per_seed(method, model, K):
    if method in ("vae", "iwae", "smc"):
        k = 1 if method == "vae" else int(np.max(K))
        return 8 * k * (model.n_latents + model.n_observations + 4)
    n = model.n_latents
    Ks = [int(K)] * n if np.isscalar(K) else list(K)
    if getattr(model, "discrete", False):
        Ks = list(model.cards)
    size = 0
    for j in range(n):
        size += Ks[j] * math.prod(Ks[p] for p in model.parents(j))
    for m in range(model.n_observations):
        size += math.prod(Ks[p] for p in model.observation_parents(m))
    return 8 * 4 * size


def estimate_batch(method: str, model, proposal, K, seeds, max_bytes: int = 1 << 27) -> np.ndarray:
    """Estimates for many seeds, evaluated in memory-bounded vectorised chunks."""
    seeds = list(seeds)
    per = max(1, max_bytes // max(1, _bytes_per_seed(method, model, K)))
    out = [np.asarray(estimate(method, model, proposal, K, seeds[i:i + per]))
           for i in range(0, len(seeds), per)]
    return np.concatenate(out) if out else np.zeros(0)
