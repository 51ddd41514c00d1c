"""Self-checks runnable from the CLI (``tensormc verify``).

Each check takes a base seed and returns ``(passed, detail)``.  The Monte
Carlo checks run at reduced scale so the whole suite finishes in well under
a minute; the full-scale versions live in the acceptance tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..estimators import estimate_batch
from ..factorgraph import build_directed_factors, evaluate
from ..gradients import KINDS, dregs_direct_iwae, finite_difference, grad_objective, objective_value, pack
from ..logtensor import LogTensor, logmmexp
from ..models import DiscreteModel, HierarchicalGaussian, ProposalSpec, marginal_proposal, sample_latents
from ..oracles import brute_force_log, loop_graph, random_graph


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_discrete_exact(seed, n_models=100):
    gen = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(n_models):
        model = DiscreteModel.random(gen, int(gen.integers(1, 5)), 4)
        g = build_directed_factors(model, sample_latents(model, None, None, 0))
        worst = max(worst, _diff(evaluate(g), model.exact_log_evidence()))
    return worst <= 1e-10, f"max |TMC - exact| = {worst:.2e} over {n_models} models"


def _diff(a, b):
    if a == b:
        return 0.0
    return abs(a - b)


def check_brute_force(seed, n_graphs=100):
    gen = np.random.default_rng([seed, 2])
    worst = 0.0
    graphs = [loop_graph(gen, K=int(gen.integers(1, 5)))]
    graphs += [random_graph(gen, int(gen.integers(1, 7)), 4) for _ in range(n_graphs - 1)]
    for g in graphs:
        worst = max(worst, _diff(evaluate(g), brute_force_log(g)))
    return worst <= 1e-10, f"max |evaluate - enumeration| = {worst:.2e} over {len(graphs)} graphs"


def check_order_invariance(seed, n_graphs=30):
    gen = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(n_graphs):
        g = random_graph(gen, int(gen.integers(2, 6)), 4)
        base = evaluate(g)
        for _ in range(3):
            worst = max(worst, _diff(base, evaluate(g, list(gen.permutation(g.live)))))
    return worst <= 1e-10, f"max spread across orders = {worst:.2e}"


def check_unbiased(seed, n_seeds=20000):
    model = HierarchicalGaussian.generate(3, 0)
    q = marginal_proposal(model)
    gt = model.exact_log_evidence()
    parts = []
    ok = True
    for method, K in (("iwae", 10), ("tmc", 2), ("smc", 64)):
        w = np.exp(estimate_batch(method, model, q, K, range(seed, seed + n_seeds)) - gt)
        z = (w.mean() - 1.0) / (w.std(ddof=1) / math.sqrt(len(w)))
        ok &= abs(z) <= 3.0
        parts.append(f"{method} z={z:+.2f}")
    return ok, ", ".join(parts)


def check_gradients(seed, n_settings=5):
    gen = np.random.default_rng([seed, 4])
    worst = 0.0
    for s in range(n_settings):
        model = HierarchicalGaussian.generate(2, int(gen.integers(0, 1 << 30)))
        model = model.with_offsets(gen.normal(scale=0.3, size=model.n_latents))
        q = ProposalSpec.factorised(gen.normal(scale=0.5, size=3), gen.uniform(0.5, 1.5, size=3))
        K = int(gen.integers(1, 5))
        worst = max(worst, gradient_error(model, q, K, int(gen.integers(0, 1 << 30))))
    return worst < 1e-5, f"max relative error vs finite differences = {worst:.2e}"


def gradient_error(model, q, K, seed, method="tmc", h=1e-5):
    """Worst relative tape-vs-FD error over every estimator kind.

    Components with |grad| <= 1e-6 are held to an absolute 1e-8 instead and
    count as infinitely wrong when they miss it.  DReGs and STL recognition
    blocks are checked against differences of their own frozen-point
    objectives; every generative block against the plain objective.
    """
    p0 = pack(model, q)
    n = model.n_latents
    plain = finite_difference(lambda p: objective_value(model, p, "reparam", K, seed, method), p0, h)
    worst = 0.0
    for kind in KINDS:
        r = grad_objective(model, q, kind, K, seed, method)
        fd = finite_difference(lambda p: objective_value(model, p, kind, K, seed, method, frozen=p0), p0, h)
        tape = np.concatenate([r.recognition, r.generative])
        ref = np.concatenate([fd[:2 * n], plain[2 * n:]])
        worst = max(worst, _grad_err(tape, ref))
    return worst


def _grad_err(tape, ref):
    worst = 0.0
    for a, b in zip(tape, ref):
        if abs(b) > 1e-6:
            worst = max(worst, abs(a - b) / abs(b))
        elif abs(a - b) >= 1e-8:
            worst = max(worst, math.inf)
    return worst


def check_dregs(seed, n_instances=20, K=5):
    gen = np.random.default_rng([seed, 5])
    worst = 0.0
    for _ in range(n_instances):
        model = HierarchicalGaussian.generate(2, int(gen.integers(0, 1 << 30)))
        q = ProposalSpec.factorised(gen.normal(scale=0.5, size=3), gen.uniform(0.5, 1.5, size=3))
        s = int(gen.integers(0, 1 << 30))
        surrogate = grad_objective(model, q, "dregs", K, s, "iwae").recognition
        direct = dregs_direct_iwae(model, q, K, s)
        worst = max(worst, float(np.max(np.abs(surrogate - direct)) / np.max(np.abs(direct))))
    return worst < 1e-6, f"max relative gap surrogate vs direct = {worst:.2e}"


def check_logmmexp(seed):
    gen = np.random.default_rng([seed, 6])
    worst = 0.0
    for offset in (700.0, -700.0, 1000.0, -1000.0):
        X = offset + gen.normal(size=(3, 4))
        Y = offset + gen.normal(size=(4, 5))
        Z = logmmexp(LogTensor((0, 1), X), LogTensor((1, 2), Y)).data
        # shifted exact reference: the offsets factor out analytically
        ref = 2 * offset + np.log(np.exp(X - offset) @ np.exp(Y - offset))
        if not np.all(np.isfinite(Z)):
            return False, f"non-finite output at offset {offset}"
        worst = max(worst, float(np.max(np.abs(Z - ref) / np.abs(ref))))
    return worst <= 1e-9, f"max relative error = {worst:.2e}"


CHECKS = {
    "discrete-exact": check_discrete_exact,
    "brute-force": check_brute_force,
    "order-invariance": check_order_invariance,
    "unbiased": check_unbiased,
    "gradients": check_gradients,
    "dregs": check_dregs,
    "logmmexp": check_logmmexp,
}


def verify_suite(name_filter: str | None = None, seed: int = 0) -> list:
    results = []
    for name, fn in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        try:
            ok, detail = fn(seed)
        except Exception as e:  # a crashing check is a failing check
            ok, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
