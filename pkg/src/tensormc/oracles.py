"""Exhaustive-enumeration references used by the verify suite and the tests."""
import itertools
import math

import numpy as np

from .factorgraph import BATCH, FactorGraph, Variable, make_graph
from .logtensor import LogTensor


def brute_force_log(g: FactorGraph) -> float:
    """log (1/prod K) sum over every index combination of prod_j f_j, by direct loops."""
    axes = [a for a, v in g.variables.items() if v.kind != BATCH and a not in g.eliminated]
    cards = [g.variables[a].cardinality for a in axes]
    terms = []
    for combo in itertools.product(*(range(c) for c in cards)):
        at = dict(zip(axes, combo))
        total = 0.0
        for f in g.factors:
            total += float(f.tensor.data[tuple(at[a] for a in f.tensor.axes)])
        terms.append(total)
    top = max(terms)
    if top == -math.inf:
        return -math.inf
    s = math.fsum(math.exp(t - top) for t in terms)
    return top + math.log(s) - sum(math.log(c) for c in cards)


def random_graph(gen: np.random.Generator, n_vars: int, max_card: int, n_factors=None, scale=2.0) -> FactorGraph:
    cards = [int(gen.integers(1, max_card + 1)) for _ in range(n_vars)]
    n_factors = n_factors or int(gen.integers(1, 2 * n_vars + 1))
    tensors = []
    for _ in range(n_factors):
        k = int(gen.integers(0, min(3, n_vars) + 1))
        scope = [int(a) for a in gen.choice(n_vars, size=k, replace=False)]
        tensors.append(LogTensor(scope, gen.normal(scale=scale, size=[cards[a] for a in scope])))
    return make_graph([Variable(a, c) for a, c in enumerate(cards)], tensors)


def loop_graph(gen: np.random.Generator, K=2, scale=1.0) -> FactorGraph:
    """The four-variable loop f1(k1,k2) f2(k1,k3) f3(k2,k4) f4(k3,k4), plus a root factor on k1."""
    scopes = [(1,), (1, 2), (1, 3), (2, 4), (3, 4)]
    tensors = [LogTensor(s, gen.normal(scale=scale, size=[K] * len(s))) for s in scopes]
    return make_graph([Variable(a, K) for a in (1, 2, 3, 4)], tensors)
