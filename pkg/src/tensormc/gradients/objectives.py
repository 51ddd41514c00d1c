"""Reparameterised, STL and DReGs gradients of IWAE/TMC objectives.

Parameters are a factorised Gaussian proposal (``q_mean[j]``, ``q_std[j]``
per latent; the recognition block) and the latent offsets of a
linear-Gaussian model (``p_offset[j]``; the generative block).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ModelError, PreconditionError
from ..factorgraph import FactorGraph, Factor, build_directed_factors, evaluate, greedy_order, make_graph, Variable
from ..logtensor import LogTensor
from ..models import FACTORISED, LinearGaussianModel, ProposalSpec, proposal_log_density, proposal_noise, sample_latents
from . import tape as T

REPARAM = "reparam"
STL = "stl"
DREGS = "dregs"
KINDS = (REPARAM, STL, DREGS)


@dataclass
class GradientResult:
    value: float
    recognition: np.ndarray
    generative: np.ndarray
    recognition_names: list
    generative_names: list


def recognition_names(n):
    return [f"q_mean[{j}]" for j in range(n)] + [f"q_std[{j}]" for j in range(n)]


def generative_names(n):
    return [f"p_offset[{j}]" for j in range(n)]


def _sample_axes(n, method):
    if method == "tmc":
        return list(range(n))
    if method == "iwae":
        return [0] * n
    raise ModelError(f"gradients are defined for 'tmc' and 'iwae', not {method!r}")


def _counts(K, n, method):
    Ks = [int(K)] * n if np.isscalar(K) else [int(k) for k in K]
    if method == "iwae" and len(set(Ks)) > 1:
        raise ModelError("IWAE uses one K for every latent")
    return Ks


def _log_factors(tape, model, P, eps, axes, stopped):
    """Per-latent prior/proposal factors and per-observation likelihoods."""
    n = model.n_latents
    z = []
    for j in range(n):
        z.append(T.record_reparam_sample(tape, P["q_mean"][j], P["q_std"][j], eps[j], (axes[j],)))
    factors = []
    for j, node in enumerate(model.latents):
        qm, qs = P["q_mean"][j], P["q_std"][j]
        if stopped:
            qm, qs = T.stop_gradient(qm), T.stop_gradient(qs)
        log_q = T.gaussian_logpdf(z[j], qm, qs)
        mean = P["p_offset"][j]
        for p, w in zip(node.parents, node.weights):
            mean = T.add(mean, z[p] if w == 1.0 else T.scale(z[p], w))
        log_p = T.gaussian_logpdf(z[j], mean, tape.const(node.std))
        factors.append(T.sub(log_p, log_q))
    for m, node in enumerate(model.observations):
        mean = tape.const(node.offset)
        for p, w in zip(node.parents, node.weights):
            mean = T.add(mean, z[p] if w == 1.0 else T.scale(z[p], w))
        factors.append(T.gaussian_logpdf(tape.const(model.data[m]), mean, tape.const(node.std)))
    return factors


def _order_for(factors):
    cards = {}
    for f in factors:
        cards.update(zip(f.axes, f.value.shape))
    g = make_graph([Variable(a, c) for a, c in cards.items()],
                   [LogTensor(f.axes, f.value, check=False) for f in factors])
    return greedy_order(g)


def tape_contract(factors, axis):
    """Mirror of :func:`tensormc.logtensor.contract` with normalisation."""
    n = factors[0].value.shape[factors[0].axes.index(axis)]
    if len(factors) == 1:
        return T.logsumexp(factors[0], axis, normalize=True)
    if len(factors) == 2 and all(len(f.axes) <= 2 for f in factors):
        a, b = factors
        oa = {x for x in a.axes if x != axis}
        ob = {x for x in b.axes if x != axis}
        if not oa & ob:
            return T.shift(T.logmmexp(a, b, axis), -math.log(n))
    prod = factors[0]
    for f in factors[1:]:
        prod = T.log_mul(prod, f)
    return T.logsumexp(prod, axis, normalize=True)


def tape_evaluate(factors, order=None):
    """Variable elimination on the tape; returns the scalar log-estimate."""
    if order is None:
        order = _order_for(factors)
    live = list(factors)
    for axis in order:
        touching = [f for f in live if axis in f.axes]
        if not touching:
            continue
        live = [f for f in live if axis not in f.axes] + [tape_contract(touching, axis)]
    return T.sum_scalars(live)


def _check(model, proposal):
    if not isinstance(model, LinearGaussianModel):
        raise ModelError("gradients need a linear-Gaussian model")
    if proposal.kind != FACTORISED:
        raise ModelError("gradients need a factorised proposal")


def grad_objective(model, proposal: ProposalSpec, kind: str, K, seed, method: str = "tmc") -> GradientResult:
    """Gradient of log P_hat (IWAE or TMC) under one of three estimators.

    ``reparam`` differentiates every path.  ``stl`` stops gradients through
    the proposal parameters inside log Q.  ``dregs`` takes the recognition
    block from the surrogate 0.5 * (sum w_bar^2 / (sum w_bar)^2) *
    log sum w_hat^2 and the generative block from the plain objective.
    """
    if kind not in KINDS:
        raise ModelError(f"unknown gradient estimator {kind!r}")
    _check(model, proposal)
    n = model.n_latents
    axes = _sample_axes(n, method)
    Ks = _counts(K, n, method)
    eps = [proposal_noise(Ks[j], seed, j) for j in range(n)]

    tape = T.Tape()
    P = {
        "q_mean": [tape.param(f"q_mean[{j}]", m) for j, m in enumerate(proposal.means)],
        "q_std": [tape.param(f"q_std[{j}]", s) for j, s in enumerate(proposal.stds)],
        "p_offset": [tape.param(f"p_offset[{j}]", node.offset) for j, node in enumerate(model.latents)],
    }
    factors = _log_factors(tape, model, P, eps, axes, stopped=kind != REPARAM)
    order = _order_for(factors)
    objective = tape_evaluate(factors, order)
    grads = tape.backward(objective)
    if kind == DREGS:
        n_terms = math.prod(Ks) if method == "tmc" else Ks[0]
        squared = tape_evaluate([T.scale(f, 2.0) for f in factors], order)
        ratio = T.exp(T.shift(T.sub(T.stop_gradient(squared), T.scale(T.stop_gradient(objective), 2.0)),
                              -math.log(n_terms)))
        surrogate = T.mul(T.scale(ratio, 0.5), squared)
        rec = tape.backward(surrogate)
    else:
        rec = grads
    rn, gn = recognition_names(n), generative_names(n)
    return GradientResult(
        value=objective.item(),
        recognition=np.array([rec[k] for k in rn]),
        generative=np.array([grads[k] for k in gn]),
        recognition_names=rn,
        generative_names=gn,
    )


def finite_difference(objective, params, h: float = 1e-5) -> np.ndarray:
    """Central differences.  ``objective`` must reuse its random numbers."""
    if not h > 0:
        raise PreconditionError("step size must be positive")
    params = np.asarray(params, dtype=np.float64)
    out = np.zeros_like(params)
    for i in range(len(params)):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        out[i] = (objective(up) - objective(down)) / (2 * h)
    return out


# --------------------------------------------------------------------------
# Forward-only objectives through the estimator code path, for checking the
# tape against finite differences.


def _unpack(model, params):
    n = model.n_latents
    params = np.asarray(params, dtype=np.float64)
    return ProposalSpec.factorised(params[:n], params[n:2 * n]), model.with_offsets(params[2 * n:3 * n])


def pack(model, proposal):
    return np.concatenate([proposal.means, proposal.stds, [node.offset for node in model.latents]])


def _graph(model, proposal, density, K, seed, method):
    samples = sample_latents(model, proposal, K, seed, shared_axis=method == "iwae")
    logq = proposal_log_density(density, samples)
    return build_directed_factors(model, samples, logq)


def _doubled(g: FactorGraph) -> FactorGraph:
    factors = [Factor(f.id, LogTensor(f.tensor.axes, 2.0 * f.tensor.data, check=False)) for f in g.factors]
    return FactorGraph(g.variables, factors, g.eliminated)


def objective_value(model, params, kind, K, seed, method="tmc", frozen=None) -> float:
    """Scalar whose ordinary gradient at ``params == frozen`` is the ``kind`` gradient.

    ``frozen`` holds the parameter point at which stopped quantities are
    evaluated; it defaults to ``params``.
    """
    proposal, m = _unpack(model, params)
    frozen = params if frozen is None else frozen
    density = proposal if kind == REPARAM else _unpack(model, frozen)[0]
    g = _graph(m, proposal, density, K, seed, method)
    if kind != DREGS:
        return evaluate(g)
    Ks = [int(K)] * model.n_latents if np.isscalar(K) else list(K)
    n_terms = math.prod(Ks) if method == "tmc" else Ks[0]
    fp, fm = _unpack(model, frozen)
    g0 = _graph(fm, fp, fp, K, seed, method)
    ratio = math.exp(evaluate(_doubled(g0)) - 2.0 * evaluate(g0) - math.log(n_terms))
    return 0.5 * ratio * evaluate(_doubled(g))
