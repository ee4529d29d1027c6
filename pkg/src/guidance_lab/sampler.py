"""Guided ancestral sampling along an increasing log-SNR grid.

Each step forms the guided noise prediction, converts it to a data estimate
``x_t``, then draws the next latent from the reverse posterior
``q(z_{t+1} | z_t, x = x_t)`` with variance interpolated by ``v`` between the
posterior variance and the forward transition variance. The last step adds no
noise and returns ``x_T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import NULL
from .errors import ConfigError, DomainError, NumericError
from .guidance import GuidanceConfig, cf_guided_eps, classifier_guided_eps
from .process import Latent, posterior_params, reverse_variance, transition_variance, x_from_eps
from .schedule import Schedule, alpha_sigma, timestep_grid


@dataclass(frozen=True)
class SamplerConfig:
    T: int = 1024
    v: float = 0.3
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ConfigError(f"T must be an integer >= 2, got {self.T}", "sampler.T")
        if not 0.0 <= self.v <= 1.0:
            raise ConfigError(f"v must lie in [0, 1], got {self.v}", "sampler.v")

    def to_dict(self) -> dict:
        return {"T": int(self.T), "v": float(self.v)}


def guided_eps(denoiser, z, lam, c, guidance: GuidanceConfig, world=None):
    """Noise prediction at one step under the configured guidance mode."""
    eps_cond = denoiser(z, lam, c)
    if guidance.mode == "none":
        return eps_cond
    if guidance.mode == "classifier-free":
        # two network evaluations per step: conditional and null token
        eps_uncond = denoiser(z, lam, np.full_like(c, NULL))
        return cf_guided_eps(eps_cond, eps_uncond, guidance.w)
    _, sigma = alpha_sigma(lam)
    return classifier_guided_eps(eps_cond, world.classifier_grad(z, lam, c), sigma, guidance.w)


def sample_step(denoiser, z, lam, lam_next, c, guidance, v, noise=None, world=None, trace=None):
    """One iteration of the sampler.

    ``lam_next=None`` marks the final step, which returns the data estimate
    itself. Otherwise ``noise`` must be a standard normal array shaped like ``z``.
    """
    eps = guided_eps(denoiser, z, lam, c, guidance, world)
    x_hat = x_from_eps(Latent(z, lam), eps)
    if lam_next is None:
        if trace is not None:
            trace.append({"lam": lam, "lam_next": None, "variance": 0.0})
        return x_hat
    post = posterior_params(Latent(z, lam), x_hat, lam_next)
    var = reverse_variance(lam, lam_next, v)
    if trace is not None:
        trace.append(
            {
                "lam": lam,
                "lam_next": lam_next,
                "variance": var,
                "posterior_variance": post.variance,
                "forward_variance": transition_variance(lam, lam_next),
            }
        )
    return post.mean + np.sqrt(var) * noise


def sample_batch(
    denoiser,
    guidance: GuidanceConfig,
    cfg: SamplerConfig,
    classes,
    rng: np.random.Generator,
    world=None,
    trace=None,
):
    """Run ``len(classes)`` independent chains in lockstep.

    Returns ``(x, classes)`` with ``x`` of shape ``(n, d)``. All randomness comes
    from ``rng``, so the batch is a deterministic function of its seed.
    """
    classes = np.asarray(classes, dtype=int).reshape(-1)
    if guidance.mode == "classifier" and world is None:
        raise ConfigError("classifier guidance needs the oracle world", "guidance.mode")
    if classes.size and (classes.min() < 0 or classes.max() >= denoiser.num_classes):
        raise DomainError(f"class index out of range [0, {denoiser.num_classes})")
    dims = world.dims if world is not None else int(denoiser.dims)
    n = classes.size
    if n == 0:
        return np.zeros((0, dims)), classes
    grid = timestep_grid(cfg.schedule, cfg.T)
    z = rng.standard_normal((n, dims))
    for t in range(cfg.T):
        last = t == cfg.T - 1
        noise = None if last else rng.standard_normal((n, dims))
        z = sample_step(
            denoiser,
            z,
            float(grid[t]),
            None if last else float(grid[t + 1]),
            classes,
            guidance,
            cfg.v,
            noise=noise,
            world=world,
            trace=trace,
        )
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite latent at step t={t + 1}", step=t + 1)
    return z, classes


def ancestral_sample(denoiser, guidance, cfg, c: int, rng, world=None):
    """A single chain for class ``c``; returns the data vector."""
    x, _ = sample_batch(denoiser, guidance, cfg, [c], rng, world=world)
    return x[0]
