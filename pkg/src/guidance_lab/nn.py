"""A small noise-prediction MLP with hand-written reverse-mode gradients.

Input features are ``[z | sinusoidal(lam) | class_embedding[c]]``; the class
embedding table has one extra final row reserved for the null token, so the
unconditional pathway has its own learnable vector.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .denoiser import NULL
from .errors import ConfigError, DomainError

DEFAULT_HIDDEN = (128, 128, 128)
DEFAULT_NUM_FREQS = 8
DEFAULT_CLASS_DIM = 8


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def lambda_frequencies(num_freqs: int) -> np.ndarray:
    # periods from ~6 to ~200 log-SNR units; lam spans [-20, 20]
    return np.geomspace(1.0 / 32.0, 1.0, num_freqs)


def embed_lambda(lam, freqs) -> np.ndarray:
    angles = np.asarray(lam, dtype=float)[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


class DenoiserNet:
    """``eps_theta(z, lam, c)``; parameters live in the ``params`` dict."""

    def __init__(self, dims, num_classes, hidden=DEFAULT_HIDDEN, num_freqs=DEFAULT_NUM_FREQS,
                 class_dim=DEFAULT_CLASS_DIM, params=None, seed=0):
        if dims < 1 or num_classes < 1:
            raise ConfigError("dims and num_classes must be positive", "net")
        if not hidden or any(h < 1 for h in hidden):
            raise ConfigError("hidden widths must be positive", "net.hidden")
        self.dims = int(dims)
        self.num_classes = int(num_classes)
        self.hidden = tuple(int(h) for h in hidden)
        self.num_freqs = int(num_freqs)
        self.class_dim = int(class_dim)
        self.freqs = lambda_frequencies(self.num_freqs)
        self.params = params if params is not None else self._init(np.random.default_rng(seed))
        shapes = self.param_shapes()
        if set(self.params) != set(shapes) or any(self.params[k].shape != s for k, s in shapes.items()):
            raise ConfigError("parameter shapes do not match the architecture", "net")

    @property
    def in_dim(self) -> int:
        return self.dims + 2 * self.num_freqs + self.class_dim

    @property
    def num_layers(self) -> int:
        return len(self.hidden) + 1

    def param_shapes(self) -> dict:
        widths = [self.in_dim, *self.hidden, self.dims]
        shapes = {"class_embedding": (self.num_classes + 1, self.class_dim)}
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            shapes[f"W{i}"] = (a, b)
            shapes[f"b{i}"] = (b,)
        return shapes

    def param_names(self) -> list:
        return list(self.param_shapes())

    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def _init(self, rng):
        params = {}
        for name, shape in self.param_shapes().items():
            if name == "class_embedding":
                params[name] = rng.standard_normal(shape)
            elif name.startswith("W"):
                params[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
            else:
                params[name] = np.zeros(shape)
        return params

    def architecture(self) -> dict:
        return {
            "dims": self.dims,
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
            "num_freqs": self.num_freqs,
            "class_dim": self.class_dim,
        }

    def copy(self) -> "DenoiserNet":
        return DenoiserNet(**self._arch_kwargs(), params={k: v.copy() for k, v in self.params.items()})

    def _arch_kwargs(self):
        a = self.architecture()
        a["hidden"] = tuple(a["hidden"])
        return a

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.param_names()])

    @classmethod
    def from_flat(cls, arch: dict, flat) -> "DenoiserNet":
        net = cls(**{**arch, "hidden": tuple(arch["hidden"])})
        flat = np.asarray(flat, dtype=float)
        if flat.size != net.num_params():
            raise ConfigError(f"expected {net.num_params()} parameters, got {flat.size}", "net")
        offset = 0
        for name, shape in net.param_shapes().items():
            size = int(np.prod(shape))
            net.params[name] = flat[offset:offset + size].reshape(shape).copy()
            offset += size
        return net

    # -- forward / backward ---------------------------------------------------

    def _rows(self, c, n):
        c = np.broadcast_to(np.asarray(c), (n,))
        if not np.issubdtype(c.dtype, np.integer):
            raise DomainError(f"class index must be an integer, got dtype {c.dtype}")
        bad = (c != NULL) & ((c < 0) | (c >= self.num_classes))
        if np.any(bad):
            raise DomainError(f"class index out of range [0, {self.num_classes}) or NULL")
        return np.where(c == NULL, self.num_classes, c)

    def forward(self, z, lam, c, keep=False):
        z = np.asarray(z, dtype=float)
        n = z.shape[0]
        rows = self._rows(c, n)
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
        h = np.concatenate(
            [z, embed_lambda(lam, self.freqs), self.params["class_embedding"][rows]], axis=1
        )
        cache = [(h, None)]
        for i in range(self.num_layers):
            pre = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.num_layers - 1:
                h = silu(pre)
            else:
                h = pre
            cache.append((h, pre))
        return (h, (rows, cache)) if keep else h

    def __call__(self, z, lam, c):
        return self.forward(z, lam, c)

    def backward(self, saved, grad_out) -> dict:
        """Gradients of ``sum(grad_out * output)`` with respect to every parameter."""
        rows, cache = saved
        grads = {}
        g = grad_out
        for i in reversed(range(self.num_layers)):
            h_in = cache[i][0]
            _, pre = cache[i + 1]
            if i < self.num_layers - 1:
                g = g * silu_grad(pre)
            grads[f"W{i}"] = h_in.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ self.params[f"W{i}"].T
        emb_grad = np.zeros_like(self.params["class_embedding"])
        np.add.at(emb_grad, rows, g[:, -self.class_dim:])
        grads["class_embedding"] = emb_grad
        return grads


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not lr > 0:
            raise ConfigError(f"learning rate must be positive, got {lr}", "train.lr")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for name in sorted(grads):
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[name] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
