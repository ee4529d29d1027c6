"""Labeled isotropic Gaussian mixture with closed-form noisy marginals.

Class ``c`` has data ``x ~ N(mu_c, s_c^2 I)``. Pushing it through
``q(z_lam | x) = N(alpha x, sigma^2 I)`` gives
``p(z_lam | c) = N(alpha mu_c, (alpha^2 s_c^2 + sigma^2) I)``, from which every
score and the Bayes classifier follow in one line each.

Array conventions: ``z`` has shape ``(..., d)``; ``lam`` and ``c`` broadcast
against ``z[..., 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .errors import ConfigError, DomainError, ShapeError
from .schedule import alpha_sigma


@dataclass(frozen=True)
class GmmClass:
    mean: tuple
    std: float
    prior: float


class GmmWorld:
    def __init__(self, classes):
        classes = [c if isinstance(c, GmmClass) else GmmClass(**c) for c in classes]
        if not classes:
            raise ConfigError("at least one class is required", "world.classes")
        means = np.array([np.asarray(c.mean, dtype=float) for c in classes])
        if means.ndim != 2:
            raise ConfigError("class means must all have the same dimension", "world.classes")
        stds = np.array([float(c.std) for c in classes])
        priors = np.array([float(c.prior) for c in classes])
        if not np.all(np.isfinite(means)):
            raise ConfigError("class means must be finite", "world.classes.mean")
        if np.any(stds <= 0) or not np.all(np.isfinite(stds)):
            raise ConfigError("every std must be positive", "world.classes.std")
        if np.any(priors <= 0):
            raise ConfigError("every prior must be positive", "world.classes.prior")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise ConfigError(f"priors sum to {priors.sum()!r}, not 1", "world.classes.prior")
        self.classes = tuple(classes)
        self.means = means
        self.stds = stds
        self.priors = priors
        self.means.flags.writeable = False
        self.stds.flags.writeable = False
        self.priors.flags.writeable = False

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    def __repr__(self):
        return f"GmmWorld(dims={self.dims}, num_classes={self.num_classes})"

    def __eq__(self, other):
        return isinstance(other, GmmWorld) and self.to_dict() == other.to_dict()

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "classes": [
                {"mean": [float(m) for m in mu], "std": float(s), "prior": float(p)}
                for mu, s, p in zip(self.means, self.stds, self.priors)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmWorld":
        try:
            classes = [GmmClass(tuple(c["mean"]), c["std"], c["prior"]) for c in d["classes"]]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed class entry ({exc})", "world.classes") from exc
        world = cls(classes)
        if "dims" in d and int(d["dims"]) != world.dims:
            raise ConfigError(
                f"dims={d['dims']} but class means have dimension {world.dims}", "world.dims"
            )
        return world

    @classmethod
    def triangle(cls, radius=1.0, std=0.4) -> "GmmWorld":
        """Three equal-prior classes on an equilateral triangle in 2D."""
        angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        return cls(
            [
                GmmClass((radius * math.cos(t), radius * math.sin(t)), std, 1 / 3)
                for t in angles
            ]
        )

    # -- sampling -------------------------------------------------------------

    def sample_data(self, rng: np.random.Generator, n: int | None = None):
        """Draw ``(x, c)``; a single pair when ``n`` is None, else batches of ``n``."""
        m = 1 if n is None else int(n)
        c = rng.choice(self.num_classes, size=m, p=self.priors)
        x = self.means[c] + self.stds[c, None] * rng.standard_normal((m, self.dims))
        if n is None:
            return x[0], int(c[0])
        return x, c

    def sample_class(self, rng: np.random.Generator, c, n: int) -> np.ndarray:
        c = self._check_class(c)
        return self.means[c] + self.stds[c] * rng.standard_normal((int(n), self.dims))

    # -- closed forms ---------------------------------------------------------

    def _check_class(self, c):
        c_arr = np.asarray(c)
        if not np.issubdtype(c_arr.dtype, np.integer):
            raise DomainError(f"class index must be an integer, got {c!r}")
        if np.any(c_arr < 0) or np.any(c_arr >= self.num_classes):
            raise DomainError(f"class index out of range [0, {self.num_classes}): {c!r}")
        return c_arr

    def _z(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.dims,):
            raise ShapeError(f"z has trailing dimension {z.shape[-1:]}, world has d={self.dims}")
        return z

    def _per_class(self, z, lam):
        """Per-class noisy means ``(..., K, d)`` and variances ``(..., K)``."""
        alpha, sigma = alpha_sigma(np.asarray(lam, dtype=float))
        alpha = np.asarray(alpha)[..., None]
        sigma = np.asarray(sigma)[..., None]
        mean = alpha[..., None] * self.means
        var = alpha**2 * self.stds**2 + sigma**2
        return mean, var

    def log_cond_all(self, z, lam):
        """log p(z_lam | c) for every class, shape ``(..., K)``."""
        z = self._z(z)
        mean, var = self._per_class(z, lam)
        sq = np.sum((z[..., None, :] - mean) ** 2, axis=-1)
        return -0.5 * sq / var - 0.5 * self.dims * np.log(2 * np.pi * var)

    def log_cond(self, z, lam, c):
        c = self._check_class(c)
        z = self._z(z)
        alpha, sigma = alpha_sigma(np.asarray(lam, dtype=float))
        var = alpha**2 * self.stds[c] ** 2 + sigma**2
        sq = np.sum((z - np.asarray(alpha)[..., None] * self.means[c]) ** 2, axis=-1)
        return -0.5 * sq / var - 0.5 * self.dims * np.log(2 * np.pi * var)

    def log_marginal(self, z, lam):
        return logsumexp(self.log_cond_all(z, lam) + np.log(self.priors), axis=-1)

    def bayes_posterior(self, z, lam):
        """Exact p(c | z_lam), shape ``(..., K)``."""
        return softmax(self.log_cond_all(z, lam) + np.log(self.priors), axis=-1)

    def log_bayes_posterior(self, z, lam):
        return log_softmax(self.log_cond_all(z, lam) + np.log(self.priors), axis=-1)

    def cond_eps_all(self, z, lam):
        """Exact conditional noise prediction for every class, shape ``(..., K, d)``."""
        z = self._z(z)
        _, sigma = alpha_sigma(np.asarray(lam, dtype=float))
        mean, var = self._per_class(z, lam)
        return np.asarray(sigma)[..., None, None] * (z[..., None, :] - mean) / var[..., None]

    def exact_cond_eps(self, z, lam, c):
        """``sigma (z - alpha mu_c) / (alpha^2 s_c^2 + sigma^2)``, i.e. ``-sigma grad log p(z|c)``."""
        c = self._check_class(c)
        z = self._z(z)
        alpha, sigma = alpha_sigma(np.asarray(lam, dtype=float))
        alpha = np.asarray(alpha)[..., None]
        sigma = np.asarray(sigma)[..., None]
        mu = self.means[c]
        var = alpha**2 * self.stds[c][..., None] ** 2 + sigma**2
        return sigma * (z - alpha * mu) / var

    def exact_uncond_eps(self, z, lam):
        """Posterior-weighted sum of the conditional predictions (the mixture score)."""
        post = self.bayes_posterior(z, lam)
        return np.sum(post[..., None] * self.cond_eps_all(z, lam), axis=-2)

    def classifier_grad(self, z, lam, c):
        """``grad_z log p(c | z_lam) = -(eps*(z, c) - eps*(z)) / sigma``.

        The difference is formed as ``sum_j p(j|z) (eps_c - eps_j)`` so it does
        not cancel catastrophically when the posterior is near one-hot.
        """
        c = self._check_class(c)
        _, sigma = alpha_sigma(np.asarray(lam, dtype=float))
        all_eps = self.cond_eps_all(z, lam)
        own = np.take_along_axis(all_eps, c[..., None, None] * np.ones((1, 1), int), axis=-2)
        post = self.bayes_posterior(z, lam)
        diff = np.sum(post[..., None] * (own - all_eps), axis=-2)
        return -diff / np.asarray(sigma)[..., None]
