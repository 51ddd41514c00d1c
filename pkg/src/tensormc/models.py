"""Toy generative models, proposals, samplers and exact evidences.

Continuous models are linear-Gaussian DAGs: each latent (and each observed
variable) is Normal with mean ``offset + sum(w * parent)`` and a fixed
variance.  Latent ``j`` is always a parent-before-child ordering, i.e.
parents have lower indices.
"""
from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field, replace
from graphlib import CycleError, TopologicalSorter
from typing import Sequence

import numpy as np

from . import rng
from .errors import EvidenceError, ModelError
from .factorgraph import BATCH_AXIS, build_directed_factors
from .logtensor import LogTensor, expand, union_axes

LOG_2PI = math.log(2.0 * math.pi)

FACTORISED = "factorised-marginal"
PRIOR_CONDITIONAL = "prior-conditional"
MIXTURE = "mixture"
DIAGONAL = "diagonal"


def normal_logpdf(x, mean, var):
    with np.errstate(over="ignore"):
        return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True)
class GaussianConditional:
    parents: tuple = ()
    weights: tuple = ()
    offset: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        weights = tuple(float(w) for w in self.weights) or (1.0,) * len(self.parents)
        object.__setattr__(self, "weights", weights)
        if len(self.weights) != len(self.parents):
            raise ModelError("one weight per parent")
        if not self.var > 0:
            raise ModelError(f"variance must be positive, got {self.var}")

    @property
    def std(self):
        return math.sqrt(self.var)

    def mean(self, parent_values):
        out = self.offset
        for w, v in zip(self.weights, parent_values):
            out = out + w * v
        return out


@dataclass
class Samples:
    """Per-latent sample vectors and their proposal log-densities.

    ``values[j]`` has shape ``(K_j,)``, or ``(B, K_j)`` when a batch of seeds
    was drawn at once; latent ``j`` is indexed by sample axis ``axes[j]``.
    """
    values: list
    log_q: list
    axes: list
    batched: bool = False

    def own_axes(self, j):
        return (BATCH_AXIS, self.axes[j]) if self.batched else (self.axes[j],)

    def on_axes(self, data, j) -> LogTensor:
        return LogTensor(self.own_axes(j), data, check=False)

    def aligned(self, js):
        """Axis tuple covering latents ``js`` and their values expanded onto it."""
        out = union_axes(*(self.own_axes(j) for j in js))
        return out, [expand(self.values[j], self.own_axes(j), out) for j in js]


def _full(out_axes, data, samples: Samples, js) -> LogTensor:
    sizes = {}
    for j in js:
        sizes.update(zip(samples.own_axes(j), np.shape(samples.values[j])))
    shape = [sizes[a] for a in out_axes]
    return LogTensor(out_axes, np.broadcast_to(data, shape), check=False)


class LinearGaussianModel:
    discrete = False

    def __init__(self, latents: Sequence[GaussianConditional], observations: Sequence[GaussianConditional], data):
        self.latents = tuple(latents)
        self.observations = tuple(observations)
        self.data = np.asarray(data, dtype=np.float64).reshape(-1)
        if len(self.data) != len(self.observations):
            raise ModelError("one observed value per observation node")
        for j, node in enumerate(self.latents):
            if any(p >= j or p < 0 for p in node.parents):
                raise ModelError(f"latent {j}: parents must precede it, got {node.parents}")
        for node in self.observations:
            if any(not 0 <= p < len(self.latents) for p in node.parents):
                raise ModelError(f"observation parent out of range: {node.parents}")

    @property
    def n_latents(self):
        return len(self.latents)

    @property
    def n_observations(self):
        return len(self.observations)

    def parents(self, j):
        return self.latents[j].parents

    def observation_parents(self, m):
        return self.observations[m].parents

    def with_offsets(self, offsets):
        out = copy.copy(self)
        out.latents = tuple(replace(node, offset=float(o)) for node, o in zip(self.latents, offsets))
        return out

    def log_conditional(self, j, samples: Samples) -> LogTensor:
        node = self.latents[j]
        js = (j,) + node.parents
        out, vals = samples.aligned(js)
        lp = normal_logpdf(vals[0], node.mean(vals[1:]), node.var)
        return _full(out, lp, samples, js)

    def log_likelihood(self, m, samples: Samples) -> LogTensor:
        node = self.observations[m]
        js = node.parents
        if not js:
            return LogTensor((), normal_logpdf(self.data[m], node.offset, node.var))
        out, vals = samples.aligned(js)
        lp = normal_logpdf(self.data[m], node.mean(vals), node.var)
        return _full(out, lp, samples, js)

    def moments(self):
        """Mean and covariance of the observations with latents integrated out."""
        n = self.n_latents
        B = np.zeros((n, n))
        b = np.zeros(n)
        D = np.zeros(n)
        for j, node in enumerate(self.latents):
            for p, w in zip(node.parents, node.weights):
                B[j, p] = w
            b[j], D[j] = node.offset, node.var
        A = np.linalg.inv(np.eye(n) - B)
        mz = A @ b
        Cz = A @ np.diag(D) @ A.T
        m = self.n_observations
        C = np.zeros((m, n))
        c = np.zeros(m)
        Dx = np.zeros(m)
        for i, node in enumerate(self.observations):
            for p, w in zip(node.parents, node.weights):
                C[i, p] = w
            c[i], Dx[i] = node.offset, node.var
        return C @ mz + c, C @ Cz @ C.T + np.diag(Dx)

    def exact_log_evidence(self) -> float:
        """Generic linear-Gaussian marginal likelihood via a Cholesky factor."""
        mean, cov = self.moments()
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise EvidenceError("observation covariance is not positive definite") from e
        r = np.linalg.solve(L, self.data - mean)
        return float(-0.5 * (len(r) * LOG_2PI + r @ r) - np.log(np.diag(L)).sum())

    @classmethod
    def sample_data(cls, latents, observations, data_seed):
        z = np.zeros(len(latents))
        for j, node in enumerate(latents):
            eps = rng.normal(data_seed, rng.stream_id(rng.DATA, j), 0)
            z[j] = node.mean([z[p] for p in node.parents]) + node.std * float(eps)
        x = np.zeros(len(observations))
        for i, node in enumerate(observations):
            eps = rng.normal(data_seed, rng.stream_id(rng.DATA, len(latents) + i), 0)
            x[i] = node.mean([z[p] for p in node.parents]) + node.std * float(eps)
        return x


class HierarchicalGaussian(LinearGaussianModel):
    """theta ~ N(prior_mean, 1); z_i ~ N(theta, 1); x_i ~ N(z_i, 1).

    Latent 0 is theta, latent i (1..N) is z_i.
    """

    def __init__(self, observations, prior_mean: float = 0.0):
        x = np.asarray(observations, dtype=np.float64).reshape(-1)
        if len(x) < 1:
            raise ModelError("need at least one data point")
        self.n_data = len(x)
        latents = [GaussianConditional((), (), prior_mean, 1.0)]
        latents += [GaussianConditional((0,), (1.0,), 0.0, 1.0) for _ in x]
        obs = [GaussianConditional((i + 1,), (1.0,), 0.0, 1.0) for i in range(len(x))]
        super().__init__(latents, obs, x)

    @classmethod
    def generate(cls, n_data: int, data_seed: int = 0) -> "HierarchicalGaussian":
        proto = cls(np.zeros(n_data))
        return cls(cls.sample_data(proto.latents, proto.observations, data_seed))

    def exact_log_evidence(self) -> float:
        # x ~ N(mu 1, 1 1^T + 2 I); inverse and determinant by Sherman-Morrison
        n = self.n_data
        r = self.data - self.latents[0].offset
        quad = 0.5 * (r @ r - r.sum() ** 2 / (n + 2.0))
        logdet = (n - 1) * math.log(2.0) + math.log(n + 2.0)
        value = -0.5 * (n * LOG_2PI + logdet) - 0.5 * quad
        if not math.isfinite(value):
            raise EvidenceError("non-finite evidence")
        return value


class GaussianChain(LinearGaussianModel):
    """z_1 ~ N(0, 1/N), z_i ~ N(z_{i-1}, 1/N), x ~ N(z_N, 1)."""

    def __init__(self, n_latents: int, observation: float):
        if n_latents < 1:
            raise ModelError("need at least one latent")
        step = 1.0 / n_latents
        latents = [GaussianConditional((), (), 0.0, step)]
        latents += [GaussianConditional((i - 1,), (1.0,), 0.0, step) for i in range(1, n_latents)]
        obs = [GaussianConditional((n_latents - 1,), (1.0,), 0.0, 1.0)]
        super().__init__(latents, obs, [observation])

    @classmethod
    def generate(cls, n_latents: int, data_seed: int = 0) -> "GaussianChain":
        proto = cls(n_latents, 0.0)
        return cls(n_latents, cls.sample_data(proto.latents, proto.observations, data_seed)[0])

    def exact_log_evidence(self) -> float:
        # z_N ~ N(0, 1) whatever N is, so x ~ N(0, 2)
        return float(normal_logpdf(self.data[0], 0.0, 2.0))


class DiscreteModel:
    """Discrete latents with conditional probability tables.

    ``cpts[j]`` has shape ``(card_j, *parent cards)`` and sums to one over its
    first axis.  ``likelihoods[m]`` holds P(x_m = observed | parents) with
    shape ``parent cards``.
    """
    discrete = True

    def __init__(self, cards, parents, cpts, obs_parents, likelihoods):
        self.cards = tuple(int(c) for c in cards)
        self._parents = tuple(tuple(p) for p in parents)
        self.cpts = [np.asarray(t, dtype=np.float64) for t in cpts]
        self._obs_parents = tuple(tuple(p) for p in obs_parents)
        self.likelihoods = [np.asarray(t, dtype=np.float64) for t in likelihoods]
        for j, t in enumerate(self.cpts):
            want = (self.cards[j],) + tuple(self.cards[p] for p in self._parents[j])
            if t.shape != want:
                raise ModelError(f"cpt {j} has shape {t.shape}, expected {want}")
            if np.abs(t.sum(axis=0) - 1.0).max() > 1e-12:
                raise ModelError(f"cpt {j} columns do not sum to one")
            if any(p >= j for p in self._parents[j]):
                raise ModelError(f"latent {j}: parents must precede it")
        for m, t in enumerate(self.likelihoods):
            want = tuple(self.cards[p] for p in self._obs_parents[m])
            if t.shape != want:
                raise ModelError(f"likelihood {m} has shape {t.shape}, expected {want}")

    @property
    def n_latents(self):
        return len(self.cards)

    @property
    def n_observations(self):
        return len(self.likelihoods)

    def parents(self, j):
        return self._parents[j]

    def observation_parents(self, m):
        return self._obs_parents[m]

    def _lookup(self, table, js, samples):
        out, vals = samples.aligned(js)
        idx = tuple(np.asarray(v, dtype=np.intp) for v in vals)
        with np.errstate(divide="ignore"):
            return _full(out, np.log(table[idx]), samples, js)

    def log_conditional(self, j, samples):
        return self._lookup(self.cpts[j], (j,) + self._parents[j], samples)

    def log_likelihood(self, m, samples):
        js = self._obs_parents[m]
        if not js:
            with np.errstate(divide="ignore"):
                return LogTensor((), np.log(self.likelihoods[m]))
        return self._lookup(self.likelihoods[m], js, samples)

    def exact_log_evidence(self) -> float:
        """Exhaustive sum over every joint latent configuration."""
        total = 0.0
        for z in itertools.product(*(range(c) for c in self.cards)):
            p = 1.0
            for j, t in enumerate(self.cpts):
                p *= t[(z[j],) + tuple(z[q] for q in self._parents[j])]
            for m, t in enumerate(self.likelihoods):
                p *= t[tuple(z[q] for q in self._obs_parents[m])]
            total += p
        if total <= 0:
            return -math.inf
        return math.log(total)

    @classmethod
    def random(cls, gen: np.random.Generator, n_latents: int, max_card: int, max_parents: int = 2):
        cards = [int(gen.integers(1, max_card + 1)) for _ in range(n_latents)]
        parents, cpts = [], []
        for j in range(n_latents):
            k = int(gen.integers(0, min(j, max_parents) + 1))
            ps = tuple(sorted(gen.choice(j, size=k, replace=False).tolist())) if k else ()
            shape = (cards[j],) + tuple(cards[p] for p in ps)
            t = gen.dirichlet(np.ones(cards[j]), size=shape[1:]) if ps else gen.dirichlet(np.ones(cards[j]))
            cpts.append(np.moveaxis(np.asarray(t), -1, 0))
            parents.append(ps)
        obs_parents, liks = [], []
        for _ in range(int(gen.integers(1, 3))):
            k = int(gen.integers(1, min(n_latents, 2) + 1))
            ps = tuple(sorted(gen.choice(n_latents, size=k, replace=False).tolist()))
            obs_parents.append(ps)
            liks.append(gen.uniform(0.01, 1.0, size=tuple(cards[p] for p in ps)))
        return cls(cards, parents, cpts, obs_parents, liks)


@dataclass(frozen=True)
class ProposalSpec:
    """Gaussian proposal, one conditional per latent.

    Factorised proposals have no parent links.  For linked proposals,
    ``pairing`` says how a draw picks its parent samples.  "diagonal" pairs
    draw k with draw k of every parent.  "mixture" picks each parent sample
    uniformly at random, so the density of a draw given all parent samples is
    the uniform mixture over them.
    """
    kind: str
    nodes: tuple = field(default_factory=tuple)
    pairing: str = MIXTURE

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.kind == FACTORISED and any(n.parents for n in self.nodes):
            raise ModelError("factorised proposal nodes cannot have parents")
        if self.kind not in (FACTORISED, PRIOR_CONDITIONAL):
            raise ModelError(f"unknown proposal kind {self.kind!r}")
        if self.pairing not in (MIXTURE, DIAGONAL):
            raise ModelError(f"unknown pairing {self.pairing!r}")

    def order(self):
        ts = TopologicalSorter({j: node.parents for j, node in enumerate(self.nodes)})
        try:
            return list(ts.static_order())
        except CycleError as e:
            raise ModelError(f"proposal links contain a cycle: {e.args[1]}") from e

    @classmethod
    def factorised(cls, means, stds):
        return cls(FACTORISED, [GaussianConditional((), (), float(m), float(s) ** 2) for m, s in zip(means, stds)])

    @property
    def means(self):
        return np.array([n.offset for n in self.nodes])

    @property
    def stds(self):
        return np.array([n.std for n in self.nodes])


def marginal_proposal(model) -> ProposalSpec:
    """Proposals matching the generative marginals of each latent."""
    if isinstance(model, HierarchicalGaussian):
        mu = model.latents[0].offset
        return ProposalSpec.factorised([mu] * model.n_latents, [1.0] + [math.sqrt(2.0)] * model.n_data)
    if isinstance(model, GaussianChain):
        n = model.n_latents
        return ProposalSpec.factorised(np.zeros(n), [math.sqrt((i + 1) / n) for i in range(n)])
    raise ModelError(f"no marginal proposal for {type(model).__name__}")


def prior_proposal(model: LinearGaussianModel, pairing: str = MIXTURE) -> ProposalSpec:
    return ProposalSpec(PRIOR_CONDITIONAL, model.latents, pairing)


def _counts(K, n):
    if np.isscalar(K):
        K = [int(K)] * n
    K = [int(k) for k in K]
    if len(K) != n:
        raise ModelError(f"need {n} sample counts, got {len(K)}")
    if min(K, default=1) < 1:
        raise ModelError("sample counts must be >= 1")
    return K


def sample_latents(model, proposal: ProposalSpec | None, K, seed, shared_axis: bool = False) -> Samples:
    """Draw ``K_j`` proposal samples per latent.

    ``seed`` may be a single integer or a sequence of seeds; a sequence gives
    batched samples with a leading seed dimension.  With ``shared_axis`` every
    latent uses sample axis 0, giving joint draws (IWAE-style) instead of
    per-latent sample sets.  Discrete models ignore ``proposal`` and
    enumerate their support with a uniform proposal.
    """
    n = model.n_latents
    batched = not np.isscalar(seed)
    seeds = rng.seed_array(seed)
    axes = [0] * n if shared_axis else list(range(n))
    if getattr(model, "discrete", False):
        values, logq = [], []
        for j, card in enumerate(model.cards):
            v = np.arange(card, dtype=np.float64)
            lq = np.full(card, -math.log(card))
            if batched:
                v, lq = np.tile(v, (len(seeds), 1)), np.tile(lq, (len(seeds), 1))
            values.append(v)
            logq.append(lq)
        return Samples(values, logq, axes, batched)
    K = _counts(K, n)
    if shared_axis and len(set(K)) > 1:
        raise ModelError("joint draws need one sample count for every latent")
    if len(proposal.nodes) != n:
        raise ModelError(f"proposal has {len(proposal.nodes)} nodes for {n} latents")
    diagonal = shared_axis or proposal.pairing == DIAGONAL
    values = [None] * n
    logq = [None] * n
    for j in proposal.order():
        node = proposal.nodes[j]
        if diagonal:
            for p in node.parents:
                if K[p] != K[j]:
                    raise ModelError(f"paired proposal needs K[{p}] == K[{j}]")
        counter = np.arange(K[j], dtype=np.uint64)
        eps = rng.normal(seeds[:, None], rng.stream_id(rng.PROPOSAL, j), counter[None, :])
        if not batched:
            eps = eps[0]
        if diagonal or not node.parents:
            mean = node.mean([values[p] for p in node.parents])
            values[j] = mean + node.std * eps
            logq[j] = normal_logpdf(values[j], mean, node.var)
            continue
        picked = []
        for i, p in enumerate(node.parents):
            u = rng.uniform(seeds[:, None], rng.stream_id(rng.ANCESTOR, (j << 8) | i), counter[None, :])
            idx = np.minimum((u * K[p]).astype(np.int64), K[p] - 1)
            if not batched:
                idx = idx[0]
            picked.append(np.take_along_axis(values[p], idx, axis=-1))
        values[j] = node.mean(picked) + node.std * eps
        logq[j] = _mixture_logpdf(node, values[j], [values[p] for p in node.parents])
    return Samples(values, logq, axes, batched)


def _mixture_logpdf(node, z, parent_values):
    """log of the uniform mixture of ``node`` over every combination of parent samples."""
    m = len(parent_values)
    lead = z.ndim - 1
    # z gets its own dimension, then one dimension per parent's sample axis
    zz = z.reshape(z.shape + (1,) * m)
    pv = []
    for i, v in enumerate(parent_values):
        shape = v.shape[:lead] + (1,) + tuple(v.shape[-1] if t == i else 1 for t in range(m))
        pv.append(v.reshape(shape))
    dens = normal_logpdf(zz, node.mean(pv), node.var)
    red = tuple(range(lead + 1, lead + 1 + m))
    top = np.max(dens, axis=red, keepdims=True)
    out = top + np.log(np.sum(np.exp(dens - top), axis=red, keepdims=True))
    return out.reshape(z.shape) - sum(math.log(v.shape[-1]) for v in parent_values)


def proposal_log_density(proposal: ProposalSpec, samples: Samples) -> list:
    """log Q of existing samples under (possibly different) proposal parameters."""
    out = []
    shared = len(set(samples.axes)) < len(samples.axes)
    for j, node in enumerate(proposal.nodes):
        parents = [samples.values[p] for p in node.parents]
        if parents and proposal.pairing == MIXTURE and not shared:
            out.append(_mixture_logpdf(node, samples.values[j], parents))
        else:
            out.append(normal_logpdf(samples.values[j], node.mean(parents), node.var))
    return out


def proposal_noise(K, seed, j):
    """The standard-normal noise behind draw ``0..K-1`` of latent ``j``."""
    return rng.normal(seed, rng.stream_id(rng.PROPOSAL, j), np.arange(K, dtype=np.uint64))


def log_joint_factors(model, samples: Samples) -> list:
    """Factor tensors, one per latent then one per observation."""
    return [f.tensor for f in build_directed_factors(model, samples).factors]
