"""Direct per-sample DReGs gradient for IWAE, written as explicit loops.

sum_i (w_i^2 / (sum_j w_j)^2) * dz_i/dphi * dlog w/dz |_{z_i}

This is the reference the stop-gradient surrogate is checked against.
"""
import math

import numpy as np

from ..models import normal_logpdf, proposal_noise


def dregs_direct_iwae(model, proposal, K, seed):
    n = model.n_latents
    mu, sd = proposal.means, proposal.stds
    eps = [proposal_noise(K, seed, j) for j in range(n)]

    children = [[] for _ in range(n)]
    for c, node in enumerate(model.latents):
        for p, w in zip(node.parents, node.weights):
            children[p].append((c, w))
    obs_of = [[] for _ in range(n)]
    for o, node in enumerate(model.observations):
        for p, w in zip(node.parents, node.weights):
            obs_of[p].append((o, w))

    def cond_mean(node, z):
        m = node.offset
        for p, w in zip(node.parents, node.weights):
            m += w * z[p]
        return m

    logw = []
    dlogw_dz = []
    for i in range(K):
        z = [mu[j] + sd[j] * eps[j][i] for j in range(n)]
        lw = 0.0
        for j, node in enumerate(model.latents):
            lw += normal_logpdf(z[j], cond_mean(node, z), node.var) - normal_logpdf(z[j], mu[j], sd[j] ** 2)
        for o, node in enumerate(model.observations):
            lw += normal_logpdf(model.data[o], cond_mean(node, z), node.var)
        grad = []
        for j, node in enumerate(model.latents):
            d = -(z[j] - cond_mean(node, z)) / node.var + (z[j] - mu[j]) / sd[j] ** 2
            for c, w in children[j]:
                cn = model.latents[c]
                d += w * (z[c] - cond_mean(cn, z)) / cn.var
            for o, w in obs_of[j]:
                on = model.observations[o]
                d += w * (model.data[o] - cond_mean(on, z)) / on.var
            grad.append(d)
        logw.append(float(lw))
        dlogw_dz.append(grad)

    top = max(logw)
    total = sum(math.exp(l - top) for l in logw)
    g_mu = np.zeros(n)
    g_sd = np.zeros(n)
    for i in range(K):
        coef = (math.exp(logw[i] - top) / total) ** 2
        for j in range(n):
            g_mu[j] += coef * dlogw_dz[i][j]
            g_sd[j] += coef * eps[j][i] * dlogw_dz[i][j]
    return np.concatenate([g_mu, g_sd])
