"""Quadrature reproduction of guided class-conditional densities in 2D.

For each class the unnormalized guided density ``p(x|c) p(c|x)^w`` is
evaluated on a uniform grid at the schedule's clean end, normalized with the
trapezoidal rule, and mixed with the class priors.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, QuadratureError
from .schedule import DEFAULT_LAMBDA_MAX
from .world import GmmWorld

NORMALIZATION_TOL = 1e-3
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    bounds: tuple = (-4.0, 4.0)
    resolution: int = 256

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo < hi:
            raise ConfigError(f"bounds must satisfy lo < hi, got {self.bounds}", "density.bounds")
        if self.resolution < 3:
            raise ConfigError("resolution must be >= 3", "density.resolution")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(self.bounds[0], self.bounds[1], self.resolution)


@dataclass
class DensityGrid:
    bounds: tuple
    resolution: int
    w: float
    axis: np.ndarray
    classes: np.ndarray  # (K, R, R) normalized guided conditionals, indexed [c, iy, ix]
    mixture: np.ndarray  # (R, R)
    residual: float  # worst |integral - 1| of the analytically normalized w=0 conditionals
    entropies: np.ndarray = field(default=None)

    def integral(self, values) -> float:
        return float(trapezoid(trapezoid(values, self.axis, axis=-1), self.axis, axis=-1))

    def write(self, path) -> None:
        """Write ``x, y, class_0, ..., mixture`` CSV plus a ``.json`` sidecar."""
        path = Path(path)
        xx, yy = np.meshgrid(self.axis, self.axis)
        k = self.classes.shape[0]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"] + [f"class_{i}" for i in range(k)] + ["mixture"])
            cols = [xx.ravel(), yy.ravel()] + [g.ravel() for g in self.classes] + [self.mixture.ravel()]
            for row in zip(*cols):
                writer.writerow([repr(float(v)) for v in row])
        sidecar = {
            "bounds": list(self.bounds),
            "resolution": self.resolution,
            "w": self.w,
            "normalization_residual": self.residual,
            "class_entropy_nats": [float(e) for e in self.entropies],
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def _trapz2(values, axis):
    return trapezoid(trapezoid(values, axis, axis=-1), axis, axis=-1)


def differential_entropy(density, axis) -> float:
    """``-∫ p log p`` by the trapezoidal rule; zero-density cells contribute 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(density > 0, -density * np.log(density), 0.0)
    return float(_trapz2(integrand, axis))


def guided_density_grid(
    world: GmmWorld, w: float, spec: GridSpec = GridSpec(), lam: float = DEFAULT_LAMBDA_MAX
) -> DensityGrid:
    if world.dims != 2:
        raise ConfigError(f"density grids need a 2D world, got d={world.dims}", "world.dims")
    if not w >= 0:
        raise ConfigError(f"w must be >= 0, got {w}", "guidance.w")
    axis = spec.axis
    xx, yy = np.meshgrid(axis, axis)
    z = np.stack([xx, yy], axis=-1)

    log_cond = np.moveaxis(world.log_cond_all(z, lam), -1, 0)  # (K, R, R)
    log_post = world.log_bayes_posterior(z, lam)
    log_post = np.moveaxis(log_post, -1, 0)

    residual = float(np.max(np.abs(_trapz2(np.exp(log_cond), axis) - 1.0)))
    if residual > NORMALIZATION_TOL:
        raise QuadratureError(
            f"normalization residual {residual:.3e} exceeds {NORMALIZATION_TOL:g}; "
            "widen the bounds or raise the resolution"
        )

    log_guided = log_cond + w * log_post
    # shift by the per-class max before exponentiating; normalization removes it
    log_guided -= log_guided.max(axis=(1, 2), keepdims=True)
    guided = np.exp(log_guided)
    guided /= _trapz2(guided, axis)[:, None, None]

    edge = np.concatenate(
        [guided[:, 0, :], guided[:, -1, :], guided[:, :, 0], guided[:, :, -1]], axis=1
    )
    ratio = float(np.max(edge.max(axis=1) / guided.max(axis=(1, 2))))
    if ratio > BOUNDARY_TOL:
        raise QuadratureError(
            f"boundary density is {ratio:.3e} of the peak (limit {BOUNDARY_TOL:g}); widen the bounds"
        )

    mixture = np.tensordot(world.priors, guided, axes=1)
    entropies = np.array([differential_entropy(g, axis) for g in guided])
    return DensityGrid(
        bounds=tuple(spec.bounds),
        resolution=spec.resolution,
        w=float(w),
        axis=axis,
        classes=guided,
        mixture=mixture,
        residual=residual,
        entropies=entropies,
    )
