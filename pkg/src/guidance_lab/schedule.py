"""Log-SNR parameterization of the variance-preserving diffusion.

Conventions: ``lam`` is the log signal-to-noise ratio ``log(alpha^2 / sigma^2)``.
Noise is added as ``lam`` decreases. :func:`timestep_grid` returns values in
increasing order (the order the sampler visits them); the forward process
walks the same grid reversed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DomainError

DEFAULT_LAMBDA_MIN = -20.0
DEFAULT_LAMBDA_MAX = 20.0


@dataclass(frozen=True)
class Schedule:
    lambda_min: float = DEFAULT_LAMBDA_MIN
    lambda_max: float = DEFAULT_LAMBDA_MAX

    def __post_init__(self):
        if not (math.isfinite(self.lambda_min) and math.isfinite(self.lambda_max)):
            raise ConfigError("endpoints must be finite", "schedule")
        if not self.lambda_min < self.lambda_max:
            raise ConfigError(
                f"lambda_min ({self.lambda_min}) must be < lambda_max ({self.lambda_max})",
                "schedule.lambda_min",
            )

    @property
    def b(self) -> float:
        return math.atan(math.exp(-self.lambda_max / 2))

    @property
    def a(self) -> float:
        return math.atan(math.exp(-self.lambda_min / 2)) - self.b

    def to_dict(self) -> dict:
        return {"lambda_min": self.lambda_min, "lambda_max": self.lambda_max}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            float(d.get("lambda_min", DEFAULT_LAMBDA_MIN)),
            float(d.get("lambda_max", DEFAULT_LAMBDA_MAX)),
        )


@dataclass(frozen=True)
class NoiseLevel:
    lam: float
    alpha: float
    sigma: float


def alpha_sigma(lam):
    """Return ``(alpha, sigma)`` for scalar or array ``lam`` without range checks.

    ``sigma^2`` is evaluated as ``sigmoid(-lam)`` rather than ``1 - alpha^2`` so it
    keeps full relative precision at high SNR.
    """
    return np.sqrt(expit(lam)), np.sqrt(expit(-np.asarray(lam, dtype=float)))


def _check_lambda(schedule: Schedule, lam) -> None:
    arr = np.asarray(lam, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("lambda is NaN")
    if np.any(arr < schedule.lambda_min):
        raise DomainError(f"lambda {arr.min()} below lambda_min {schedule.lambda_min}")
    if np.any(arr > schedule.lambda_max):
        raise DomainError(f"lambda {arr.max()} above lambda_max {schedule.lambda_max}")


def noise_level(schedule: Schedule, lam: float) -> NoiseLevel:
    _check_lambda(schedule, lam)
    alpha, sigma = alpha_sigma(float(lam))
    return NoiseLevel(float(lam), float(alpha), float(sigma))


def sample_lambda(schedule: Schedule, u):
    """Map uniform variates to log-SNR via ``lam = -2 log tan(a u + b)``.

    Works elementwise on arrays. With ``phi = pi/2 - theta`` the same value is
    ``2 log tan(phi)``; the smaller of the two angles is used in the tails and
    the balanced form ``log tan(phi) - log tan(theta)`` in the middle, which
    keeps precision everywhere and gives exactly 0 at the median of a
    symmetric schedule.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(np.isnan(u_arr)) or np.any(u_arr < 0.0) or np.any(u_arr > 1.0):
        raise DomainError("u must lie in [0, 1]")
    a, b = schedule.a, schedule.b
    theta = b + a * u_arr
    # pi/2 - theta, written without subtracting from pi/2
    phi = math.atan(math.exp(schedule.lambda_min / 2)) + a * (1.0 - u_arr)
    eighth = math.pi / 8
    with np.errstate(divide="ignore", invalid="ignore"):
        log_tan_theta = np.log(np.tan(np.clip(theta, 0.0, 3 * eighth)))
        log_tan_phi = np.log(np.tan(np.clip(phi, 0.0, 3 * eighth)))
        lam = np.where(
            theta < eighth,
            -2.0 * log_tan_theta,
            np.where(phi < eighth, 2.0 * log_tan_phi, log_tan_phi - log_tan_theta),
        )
    lam = np.where(u_arr == 0.0, schedule.lambda_max, lam)
    lam = np.where(u_arr == 1.0, schedule.lambda_min, lam)
    lam = np.clip(lam, schedule.lambda_min, schedule.lambda_max)
    return float(lam) if lam.ndim == 0 else lam


def lambda_cdf(schedule: Schedule, lam):
    """Inverse of :func:`sample_lambda`: the probability that a draw is >= ``lam``.

    Because ``u = 0`` maps to ``lambda_max`` this is the upper-tail probability;
    :func:`lambda_distribution_cdf` gives the ordinary CDF.
    """
    _check_lambda(schedule, lam)
    lam_arr = np.asarray(lam, dtype=float)
    lo, hi = schedule.lambda_min, schedule.lambda_max
    # angles lam -> lambda_max and lambda_min -> lam via the tan-difference identity;
    # their ratio gives exact endpoints and exactly 1/2 at the middle of a symmetric schedule
    above = np.arctan2(np.sinh((hi - lam_arr) / 4), np.cosh((lam_arr + hi) / 4))
    below = np.arctan2(np.sinh((lam_arr - lo) / 4), np.cosh((lam_arr + lo) / 4))
    u = above / (above + below)
    u = np.where(lam_arr == schedule.lambda_max, 0.0, u)
    u = np.where(lam_arr == schedule.lambda_min, 1.0, u)
    u = np.clip(u, 0.0, 1.0)
    return float(u) if u.ndim == 0 else u


def lambda_distribution_cdf(schedule: Schedule, lam):
    """P(Lambda <= lam) for the training distribution p(lambda)."""
    return 1.0 - lambda_cdf(schedule, lam)


def timestep_grid(schedule: Schedule, T: int) -> np.ndarray:
    if int(T) != T or T < 2:
        raise ConfigError(f"T must be an integer >= 2, got {T}", "sampler.T")
    u = np.linspace(0.0, 1.0, int(T))
    grid = np.asarray(sample_lambda(schedule, u))[::-1].copy()
    grid[0] = schedule.lambda_min
    grid[-1] = schedule.lambda_max
    return grid
