"""Gaussian algebra of the forward process and its reverse posterior.

All covariances are isotropic, so variances are scalars. Transitions always
run from a noisier ``lam`` to a cleaner ``lam_prime`` (``lam < lam_prime``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, OrderingError, ShapeError
from .schedule import NoiseLevel, alpha_sigma

# Test-only mutation hook: scales transition_variance by (1 + _perturbation)
# so the self-check suite can prove it detects a broken formula.
_perturbation = 0.0


@dataclass(frozen=True)
class Latent:
    z: np.ndarray
    lam: float


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise NumericError(f"negative variance {self.variance}")


def _one_minus_exp(lam, lam_prime):
    """``1 - exp(lam - lam_prime)`` via expm1, with ordering enforced."""
    lam = np.asarray(lam, dtype=float)
    lam_prime = np.asarray(lam_prime, dtype=float)
    if np.any(lam >= lam_prime):
        raise OrderingError(f"need lam < lam_prime, got lam={lam}, lam_prime={lam_prime}")
    return -np.expm1(lam - lam_prime)


def forward_marginal(x, level: NoiseLevel, eps) -> Latent:
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape != eps.shape:
        raise ShapeError(f"x has shape {x.shape} but eps has shape {eps.shape}")
    return Latent(level.alpha * x + level.sigma * eps, level.lam)


def transition_variance(lam, lam_prime):
    """Variance of q(z_lam | z_lam_prime): ``(1 - e^(lam - lam_prime)) sigma_lam^2``."""
    _, sigma = alpha_sigma(lam)
    out = _one_minus_exp(lam, lam_prime) * sigma**2 * (1.0 + _perturbation)
    return float(out) if np.ndim(out) == 0 else out


def transition_mean_scale(lam, lam_prime):
    """``alpha_lam / alpha_lam_prime``, the mean multiplier of q(z_lam | z_lam_prime)."""
    return float(alpha_sigma(lam)[0] / alpha_sigma(lam_prime)[0])


def posterior_params(latent: Latent, x, lam_prime: float) -> GaussianParams:
    """Parameters of q(z_lam_prime | z_lam, x) for ``lam_prime > lam``."""
    lam = latent.lam
    z = np.asarray(latent.z, dtype=float)
    x = np.asarray(x, dtype=float)
    if z.shape != x.shape:
        raise ShapeError(f"z has shape {z.shape} but x has shape {x.shape}")
    one_minus = float(_one_minus_exp(lam, lam_prime))
    ratio = float(np.exp(lam - lam_prime))
    alpha, _ = alpha_sigma(lam)
    alpha_p, sigma_p = alpha_sigma(lam_prime)
    mean = ratio * (alpha_p / alpha) * z + one_minus * alpha_p * x
    return GaussianParams(mean, float(one_minus * sigma_p**2))


def reverse_variance(lam: float, lam_prime: float, v: float) -> float:
    """Log-space interpolation ``posterior^(1-v) * forward^v`` of the two step variances."""
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"v must lie in [0, 1], got {v}", "sampler.v")
    post = float(_one_minus_exp(lam, lam_prime) * alpha_sigma(lam_prime)[1] ** 2)
    fwd = float(transition_variance(lam, lam_prime))
    if v == 0.0:
        return post
    if v == 1.0:
        return fwd
    return float(np.exp((1.0 - v) * np.log(post) + v * np.log(fwd)))


def x_from_eps(latent: Latent, eps_hat):
    z = np.asarray(latent.z, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if z.shape != eps_hat.shape:
        raise ShapeError(f"z has shape {z.shape} but eps_hat has shape {eps_hat.shape}")
    alpha, sigma = alpha_sigma(latent.lam)
    if not alpha > 0:
        raise NumericError(f"alpha underflows at lambda={latent.lam}")
    return (z - sigma * eps_hat) / alpha
