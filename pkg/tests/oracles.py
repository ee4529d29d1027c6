"""Reference computations kept independent of the package's closed forms."""

import numpy as np
from scipy.special import expit, logsumexp
from scipy.stats import multivariate_normal


def noisy_class_logpdf(z, lam, mean, std):
    alpha2 = expit(lam)
    var = alpha2 * std**2 + expit(-lam)
    return multivariate_normal(np.sqrt(alpha2) * np.asarray(mean), var * np.eye(len(mean))).logpdf(z)


def noisy_mixture_logpdf(z, lam, world_dict):
    terms = [
        np.log(c["prior"]) + noisy_class_logpdf(z, lam, c["mean"], c["std"])
        for c in world_dict["classes"]
    ]
    return logsumexp(terms)


def log_class_posterior(z, lam, world_dict, c):
    cls = world_dict["classes"][c]
    return np.log(cls["prior"]) + noisy_class_logpdf(z, lam, cls["mean"], cls["std"]) - noisy_mixture_logpdf(
        z, lam, world_dict
    )


def naive_posterior(z, lam, world_dict):
    dens = np.array([
        c["prior"] * np.exp(noisy_class_logpdf(z, lam, c["mean"], c["std"])) for c in world_dict["classes"]
    ])
    return dens / dens.sum()


def central_gradient(f, z, h=1e-3):
    """Five-point stencil, O(h^4)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for i in range(z.size):
        step = np.zeros_like(z)
        step[i] = h
        out[i] = (f(z - 2 * step) - 8 * f(z - step) + 8 * f(z + step) - f(z + 2 * step)) / (12 * h)
    return out


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)
