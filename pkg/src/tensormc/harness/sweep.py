from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

from ..estimators import estimate
from ..factorgraph import build_directed_factors
from ..models import DIAGONAL, GaussianChain, HierarchicalGaussian, marginal_proposal, prior_proposal, sample_latents
from .config import ExperimentConfig
from .records import EstimateRecord, write_csv


def build_model(cfg: ExperimentConfig):
    if cfg.model == "hierarchical":
        return HierarchicalGaussian.generate(cfg.n, cfg.data_seed)
    return GaussianChain.generate(cfg.n, cfg.data_seed)


def proposal_for(cfg: ExperimentConfig, model, method: str):
    choice = cfg.proposal or ("prior" if method == "tmc-nonfactorised" else "marginal")
    if choice == "prior":
        return prior_proposal(model)
    if choice == "prior-diagonal":
        return prior_proposal(model, DIAGONAL)
    return marginal_proposal(model)


def _tasks(cfg, seed_base):
    base = cfg.seed_base if seed_base is None else seed_base
    for method in cfg.methods:
        for K in cfg.ks:
            for i in range(cfg.seeds):
                yield method, K, base + i


def run_sweep(config, out_path=None, threads: int = 1, seed_base: int | None = None) -> list:
    """Run every (method, K, seed) point of one or more experiments.

    Records come back in task order whatever the thread count; only
    ``elapsed_ns`` varies between runs.
    """
    configs = [config] if isinstance(config, ExperimentConfig) else list(config)
    jobs = []
    for cfg in configs:
        model = build_model(cfg)
        gt = model.exact_log_evidence()
        proposals = {m: proposal_for(cfg, model, m) for m in cfg.methods}
        for method, K, seed in _tasks(cfg, seed_base):
            jobs.append((cfg, model, proposals[method], gt, method, K, seed))

    def run(job):
        cfg, model, proposal, gt, method, K, seed = job
        t0 = time.perf_counter_ns()
        value = estimate(method, model, proposal, K, seed)
        elapsed = time.perf_counter_ns() - t0
        return EstimateRecord(method, int(K), cfg.n, int(seed), float(value), float(gt), int(elapsed))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    if out_path is not None:
        write_csv(records, out_path)
    return records


def dump_graphs(config) -> str:
    """Initial factor-graph topology for each TMC-style method at its smallest K."""
    configs = [config] if isinstance(config, ExperimentConfig) else list(config)
    out = []
    for cfg in configs:
        model = build_model(cfg)
        for method in cfg.methods:
            if method not in ("tmc", "tmc-nonfactorised"):
                continue
            samples = sample_latents(model, proposal_for(cfg, model, method), min(cfg.ks), cfg.seed_base)
            out.append(f"# {cfg.name} {method} K={min(cfg.ks)}")
            out.append(build_directed_factors(model, samples).dump())
    return "\n".join(out)
