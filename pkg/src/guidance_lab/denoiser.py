"""The noise-prediction interface shared by the oracle and the trained net.

A denoiser is any callable ``eps(z, lam, c)`` with ``z`` of shape ``(n, d)``,
scalar or ``(n,)`` ``lam``, and integer ``c`` of shape ``(n,)`` where
:data:`NULL` selects the unconditional pathway.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .world import GmmWorld

NULL = -1  # the null conditioning token; never a valid class index


class Denoiser(Protocol):
    dims: int
    num_classes: int

    def __call__(self, z: np.ndarray, lam, c: np.ndarray) -> np.ndarray: ...


class OracleDenoiser:
    """Exact noise prediction for a :class:`GmmWorld`."""

    def __init__(self, world: GmmWorld):
        self.world = world
        self.dims = world.dims
        self.num_classes = world.num_classes

    def __call__(self, z, lam, c):
        z = np.asarray(z, dtype=float)
        c = np.broadcast_to(np.asarray(c), z.shape[:-1])
        null = c == NULL
        if np.all(null):
            return self.world.exact_uncond_eps(z, lam)
        if not np.any(null):
            return self.world.exact_cond_eps(z, lam, c)
        out = np.empty_like(z)
        lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), z.shape[:-1])
        out[null] = self.world.exact_uncond_eps(z[null], lam_arr[null])
        out[~null] = self.world.exact_cond_eps(z[~null], lam_arr[~null], c[~null])
        return out


class ZeroDenoiser:
    def __init__(self, dims: int, num_classes: int):
        self.dims = dims
        self.num_classes = num_classes

    def __call__(self, z, lam, c):
        return np.zeros_like(np.asarray(z, dtype=float))
