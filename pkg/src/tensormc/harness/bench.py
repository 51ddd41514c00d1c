"""Timing of TMC on a layered diagonal-Gaussian chain.

Each layer's mean and log-std come from a fixed random two-layer perceptron
applied to every sample of the layer above, which is linear in K.  The
K x K pairwise log-densities are then assembled from two matrix products.
"""
from __future__ import annotations

import csv
import math
import statistics
import time

import numpy as np

from .. import rng
from ..factorgraph import Variable, evaluate, make_graph
from ..logtensor import LogTensor

LOG_2PI = math.log(2.0 * math.pi)


class LayeredChain:
    def __init__(self, layer_widths, hidden=256, seed=0):
        if not layer_widths or min(layer_widths) < 1:
            raise ValueError("layer widths must be >= 1")
        self.widths = [int(w) for w in layer_widths]
        gen = np.random.default_rng(seed)
        self.nets = []
        # net i maps layer i+1 (or nothing, for the observation) onto layer i
        for i in range(len(self.widths)):
            d_out = self.widths[i - 1] if i > 0 else self.widths[0]
            d_in = self.widths[i]
            W1 = gen.normal(scale=1.0 / math.sqrt(d_in), size=(d_in, hidden))
            W2 = gen.normal(scale=0.1 / math.sqrt(hidden), size=(hidden, 2 * d_out))
            self.nets.append((W1, np.zeros(hidden), W2, np.zeros(2 * d_out)))
        self.x = gen.normal(size=self.widths[0])

    def net(self, i, z):
        W1, b1, W2, b2 = self.nets[i]
        h = np.tanh(z @ W1 + b1)
        out = h @ W2 + b2
        d = out.shape[1] // 2
        return out[:, :d], out[:, d:]


def _pairwise(z, mu, log_sigma):
    """log N(z[k]; mu[k'], exp(2 log_sigma[k'])) summed over dims, shape (K, K')."""
    inv_var = np.exp(-2.0 * log_sigma)
    quad = (z * z) @ inv_var.T - 2.0 * z @ (mu * inv_var).T + np.sum(mu * mu * inv_var, axis=1)
    return -0.5 * z.shape[1] * LOG_2PI - np.sum(log_sigma, axis=1) - 0.5 * quad


def tmc_layered(model: LayeredChain, K: int, seed: int) -> float:
    """TMC log-estimate; latent layer i sits on axis i+1, top layer last."""
    L = len(model.widths)
    z = []
    log_q = []
    for i, d in enumerate(model.widths):
        eps = rng.normal(seed, rng.stream_id(rng.PROPOSAL, i), np.arange(K * d, dtype=np.uint64)).reshape(K, d)
        z.append(eps)
        log_q.append(-0.5 * np.sum(eps * eps, axis=1) - 0.5 * d * LOG_2PI)
    tensors = []
    mu, ls = model.net(0, z[0])
    x = model.x[None, :]
    tensors.append(LogTensor((1,), _pairwise(x, mu, ls)[0]))
    for i in range(L - 1):
        mu, ls = model.net(i + 1, z[i + 1])
        tensors.append(LogTensor((i + 1, i + 2), _pairwise(z[i], mu, ls) - log_q[i][:, None]))
    top = z[L - 1]
    tensors.append(LogTensor((L,), -0.5 * np.sum(top * top, axis=1) - 0.5 * top.shape[1] * LOG_2PI - log_q[L - 1]))
    g = make_graph([Variable(i + 1, K) for i in range(L)], tensors)
    return evaluate(g)


def run_cost_benchmark(layer_widths, ks, repetitions: int = 5, hidden: int = 256, seed: int = 0) -> list:
    """Median wall-clock nanoseconds per K for factor construction plus elimination."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    model = LayeredChain(layer_widths, hidden=hidden, seed=seed)
    tmc_layered(model, 2, seed)  # warm caches and BLAS threads
    rows = []
    for K in ks:
        times = []
        for r in range(repetitions):
            t0 = time.perf_counter_ns()
            tmc_layered(model, int(K), seed + r)
            times.append(time.perf_counter_ns() - t0)
        rows.append((int(K), int(statistics.median(times))))
    return rows


def write_bench_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("K", "elapsed_ns"))
        w.writerows(rows)
