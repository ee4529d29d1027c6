"""Continuous-time diffusion with classifier-free guidance on an exact Gaussian-mixture world."""

from .denoiser import NULL, OracleDenoiser
from .guidance import GuidanceConfig, cf_guided_eps, classifier_guided_eps
from .sampler import SamplerConfig, ancestral_sample, sample_batch
from .schedule import NoiseLevel, Schedule, lambda_cdf, noise_level, sample_lambda, timestep_grid
from .world import GmmClass, GmmWorld

__version__ = "0.1.0"

__all__ = [
    "NULL",
    "GmmClass",
    "GmmWorld",
    "GuidanceConfig",
    "NoiseLevel",
    "OracleDenoiser",
    "SamplerConfig",
    "Schedule",
    "ancestral_sample",
    "cf_guided_eps",
    "classifier_guided_eps",
    "lambda_cdf",
    "noise_level",
    "sample_batch",
    "sample_lambda",
    "timestep_grid",
]
