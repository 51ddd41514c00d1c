"""Factor graphs over sample indices, evaluated by variable elimination.

A graph holds one variable per sample index (``k_i`` with cardinality
``K_i``) and log-domain factors over subsets of them.  Eliminating a
variable replaces every factor that mentions it with the normalised sum of
their product, so after eliminating everything the remaining scalars sum to
the log of the TMC estimate.

Graphs are immutable; every operation returns a new graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AxisError, GraphConsistencyError, GraphStateError, ModelError, ShapeError
from .logtensor import LogTensor, contract, log_mul

SAMPLE = "sample"
DISCRETE = "discrete"
# never eliminated; carries independent estimates side by side
BATCH = "batch"

BATCH_AXIS = -1


@dataclass(frozen=True)
class Variable:
    axis: int
    cardinality: int
    kind: str = SAMPLE

    def __post_init__(self):
        if self.cardinality < 1:
            raise ShapeError(f"variable {self.axis}: cardinality must be >= 1")
        if self.kind not in (SAMPLE, DISCRETE, BATCH):
            raise ValueError(f"unknown variable kind {self.kind!r}")


@dataclass(frozen=True)
class Factor:
    id: int
    tensor: LogTensor

    @property
    def scope(self) -> frozenset:
        return frozenset(self.tensor.axes)


@dataclass(frozen=True)
class FactorGraph:
    variables: Mapping[int, Variable] = field(default_factory=dict)
    factors: tuple = ()
    eliminated: frozenset = frozenset()
    # highest factor id ever issued, so merged factors never reuse an id
    last_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "variables", MappingProxyType(dict(self.variables)))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "eliminated", frozenset(self.eliminated))
        top = max((f.id for f in self.factors), default=-1)
        object.__setattr__(self, "last_id", max(self.last_id, top))
        for f in self.factors:
            for a, n in zip(f.tensor.axes, f.tensor.shape):
                v = self.variables.get(a)
                if v is None or a in self.eliminated:
                    raise GraphConsistencyError(f"factor {f.id} uses unknown or eliminated axis {a}")
                if v.cardinality != n:
                    raise ShapeError(f"factor {f.id}: axis {a} has size {n}, variable has {v.cardinality}")

    @property
    def live(self) -> list:
        """Variables still to be summed out (batch axes excluded)."""
        return sorted(a for a, v in self.variables.items()
                      if a not in self.eliminated and v.kind != BATCH)

    @property
    def batch_axes(self) -> list:
        return sorted(a for a, v in self.variables.items() if v.kind == BATCH)

    def next_factor_id(self) -> int:
        return self.last_id + 1

    def add_factor(self, tensor: LogTensor) -> "FactorGraph":
        return replace(self, factors=self.factors + (Factor(self.next_factor_id(), tensor),))

    def dump(self) -> str:
        lines = []
        for f in self.factors:
            scope = ",".join(str(a) for a in f.tensor.axes)
            shape = ",".join(str(n) for n in f.tensor.shape)
            lines.append(f"factor {f.id} scope=[{scope}] shape=[{shape}]")
        return "\n".join(lines)


def make_graph(variables: Iterable[Variable], tensors: Iterable[LogTensor]) -> FactorGraph:
    variables = {v.axis: v for v in variables}
    factors = tuple(Factor(i, t) for i, t in enumerate(tensors))
    return FactorGraph(variables, factors)


def eliminate_variable(g: FactorGraph, axis: int) -> FactorGraph:
    if axis in g.eliminated:
        raise GraphStateError(f"axis {axis} already eliminated")
    var = g.variables.get(axis)
    if var is None:
        raise AxisError(f"axis {axis} not registered")
    if var.kind == BATCH:
        raise GraphStateError(f"axis {axis} is a batch axis")
    touching = [f for f in g.factors if axis in f.scope]
    rest = [f for f in g.factors if axis not in f.scope]
    eliminated = g.eliminated | {axis}
    if not touching:
        # no factor depends on it: the 1/K_i sum of ones is exactly one
        return replace(g, eliminated=eliminated)
    # discrete variables carry their 1/K_i through the uniform proposal
    # (-ln K_i inside the factor), so both kinds normalise here
    merged = contract([f.tensor for f in touching], axis, cardinal_norm=True)
    new = Factor(g.next_factor_id(), merged)
    return FactorGraph(g.variables, tuple(rest) + (new,), eliminated, new.id)


def greedy_order(g: FactorGraph) -> list:
    """Min-fill elimination order.

    Ties go to the smaller resulting factor, then the lower axis id.
    """
    skip = set(g.batch_axes)
    cards = {a: v.cardinality for a, v in g.variables.items()}
    remaining = set(g.live)
    adj = {a: set() for a in remaining}
    for f in g.factors:
        scope = [a for a in f.scope if a not in skip]
        for a in scope:
            adj[a].update(b for b in scope if b != a)
    order = []
    while remaining:
        best = None
        for a in sorted(remaining, key=lambda a: (len(adj[a]), a)):
            cap = best[0] if best else None
            fill = _fill_in(adj, a, cap)
            if fill is None:
                continue
            size = math.prod(cards[b] for b in adj[a])
            key = (fill, size, a)
            if best is None or key < best:
                best = key
        a = best[2]
        nbrs = adj.pop(a)
        for b in nbrs:
            adj[b].discard(a)
            adj[b].update(c for c in nbrs if c != b)
        remaining.discard(a)
        order.append(a)
    return order


def _fill_in(adj, a, cap):
    """Edges added by eliminating ``a``; None once the count exceeds ``cap``."""
    nbrs = sorted(adj[a])
    fill = 0
    for i, b in enumerate(nbrs):
        nb = adj[b]
        for c in nbrs[i + 1:]:
            if c not in nb:
                fill += 1
                if cap is not None and fill > cap:
                    return None
    return fill


def check_order(g: FactorGraph, order: Sequence[int]):
    order = list(order)
    if len(set(order)) != len(order):
        raise GraphStateError(f"repeated axis in elimination order {order}")
    for a in order:
        if a not in g.variables:
            raise AxisError(f"axis {a} not registered")
    missing = set(g.live) - set(order)
    if missing:
        raise GraphStateError(f"order does not cover axes {sorted(missing)}")


def eliminate_all(g: FactorGraph, order: Sequence[int] | None = None) -> FactorGraph:
    if order is None:
        order = greedy_order(g)
    check_order(g, order)
    for a in order:
        g = eliminate_variable(g, a)
    return g


def evaluate_tensor(g: FactorGraph, order: Sequence[int] | None = None) -> LogTensor:
    """Eliminate every sample variable; returns a tensor over the batch axes."""
    g = eliminate_all(g, order)
    batch = tuple(g.batch_axes)
    total = np.zeros([g.variables[a].cardinality for a in batch])
    for f in g.factors:
        if set(f.tensor.axes) - set(batch):
            raise GraphConsistencyError(f"factor {f.id} over {f.tensor.axes} left after elimination")
        total = total + f.tensor.transpose([a for a in batch if a in f.tensor.axes]).data.reshape(
            [g.variables[a].cardinality if a in f.tensor.axes else 1 for a in batch])
    return LogTensor(batch, np.broadcast_to(total, [g.variables[a].cardinality for a in batch]), check=False)


def evaluate(g: FactorGraph, order: Sequence[int] | None = None) -> float:
    """log of the TMC estimate, including the 1/prod(K_i) normalisation."""
    if g.batch_axes:
        raise GraphConsistencyError("graph has batch axes; use evaluate_tensor")
    return evaluate_tensor(g, order).item()


def build_directed_factors(model, samples, proposal_logdensities=None) -> FactorGraph:
    """One factor per latent (prior over proposal) and one per observation.

    ``samples`` is a :class:`tensormc.models.Samples`; latent ``j`` lives on
    axis ``samples.axes[j]``.  Proposal log-densities default to the ones
    stored alongside the samples.
    """
    logq = samples.log_q if proposal_logdensities is None else proposal_logdensities
    n = model.n_latents
    if len(samples.values) != n or len(logq) != n:
        raise ModelError(f"expected samples for {n} latents, got {len(samples.values)}")
    for j in range(n):
        for p in model.parents(j):
            if not 0 <= p < n:
                raise ModelError(f"latent {j} has unknown parent {p}")
    for m in range(model.n_observations):
        for p in model.observation_parents(m):
            if not 0 <= p < n:
                raise ModelError(f"observation {m} has unknown parent {p}")
    kind = DISCRETE if getattr(model, "discrete", False) else SAMPLE
    variables = {}
    for j in range(n):
        ax, card = samples.axes[j], samples.values[j].shape[-1]
        if ax in variables and variables[ax].cardinality != card:
            raise ShapeError(f"latents sharing axis {ax} need equal sample counts")
        variables[ax] = Variable(ax, card, kind)
    if samples.batched:
        variables[BATCH_AXIS] = Variable(BATCH_AXIS, samples.values[0].shape[0], BATCH)
    tensors = []
    for j in range(n):
        prior = model.log_conditional(j, samples)
        q = samples.on_axes(np.negative(logq[j]), j)
        tensors.append(log_mul(prior, q))
    for m in range(model.n_observations):
        tensors.append(model.log_likelihood(m, samples))
    return make_graph(variables.values(), tensors)

