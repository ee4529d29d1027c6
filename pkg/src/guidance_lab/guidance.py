"""Score-mixing rules for guided sampling, all in noise-prediction space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

MODES = ("none", "classifier-free", "classifier")


@dataclass(frozen=True)
class GuidanceConfig:
    mode: str = "classifier-free"
    w: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", "guidance.mode")
        if not self.w >= 0:
            raise ConfigError(f"w must be >= 0, got {self.w}", "guidance.w")

    @property
    def strength(self) -> float:
        return 0.0 if self.mode == "none" else float(self.w)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "w": float(self.w)}

    @classmethod
    def from_dict(cls, d: dict) -> "GuidanceConfig":
        return cls(str(d.get("mode", "classifier-free")), float(d.get("w", 0.0)))


def _same_shape(a, b, names):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"{names[0]} has shape {a.shape} but {names[1]} has shape {b.shape}")
    return a, b


def cf_guided_eps(eps_cond, eps_uncond, w: float):
    """``(1 + w) eps_cond - w eps_uncond``."""
    eps_cond, eps_uncond = _same_shape(eps_cond, eps_uncond, ("eps_cond", "eps_uncond"))
    if not w >= 0:
        raise ConfigError(f"w must be >= 0, got {w}", "guidance.w")
    return (1.0 + w) * eps_cond - w * eps_uncond


def classifier_guided_eps(eps_cond, grad_log_p, sigma, w: float):
    """``eps_cond - w sigma grad log p(c|z)``; ``sigma`` may be per-row."""
    eps_cond, grad_log_p = _same_shape(eps_cond, grad_log_p, ("eps_cond", "grad_log_p"))
    if not w >= 0:
        raise ConfigError(f"w must be >= 0, got {w}", "guidance.w")
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ConfigError("sigma must be positive")
    if sigma.ndim:
        sigma = sigma[..., None]
    return eps_cond - w * sigma * grad_log_p
