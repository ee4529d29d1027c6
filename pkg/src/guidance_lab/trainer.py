"""Joint conditional/unconditional training with conditioning dropout."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .denoiser import NULL
from .errors import CheckpointError, ConfigError, TrainingError
from .nn import Adam, DenoiserNet
from .schedule import Schedule, alpha_sigma, sample_lambda
from .world import GmmWorld

log = logging.getLogger(__name__)


LR_SCHEDULES = ("cosine", "constant")


@dataclass(frozen=True)
class TrainConfig:
    p_uncond: float = 0.1
    steps: int = 20000
    batch: int = 256
    lr: float = 1e-3
    seed: int = 0
    lr_schedule: str = "cosine"

    def __post_init__(self):
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}", "train.lr_schedule")
        if not 0.0 <= self.p_uncond <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.p_uncond}", "train.p_uncond")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.steps}", "train.steps")
        if int(self.batch) != self.batch or self.batch < 1:
            raise ConfigError(f"must be a positive integer, got {self.batch}", "train.batch")
        if not self.lr > 0:
            raise ConfigError(f"must be positive, got {self.lr}", "train.lr")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: d[k] for k in ("p_uncond", "steps", "batch", "lr", "seed", "lr_schedule") if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "train")
        return cls(**known)


@dataclass
class CorruptedBatch:
    z: np.ndarray
    lam: np.ndarray
    eps: np.ndarray
    c: np.ndarray  # conditioning fed to the net, NULL where dropped


def drop_conditioning(c, p_uncond: float, rng: np.random.Generator):
    """Replace each label by NULL independently with probability ``p_uncond``."""
    c = np.asarray(c)
    drop = rng.random(c.shape) < p_uncond
    return np.where(drop, NULL, c)


def corrupt_batch(x, c, rng, schedule: Schedule, p_uncond: float) -> CorruptedBatch:
    """Lines 3-6 of the training loop: drop labels, draw lam and eps, noise the data."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    c_in = drop_conditioning(c, p_uncond, rng)
    lam = sample_lambda(schedule, rng.random(n))
    eps = rng.standard_normal(x.shape)
    alpha, sigma = alpha_sigma(lam)
    z = alpha[:, None] * x + sigma[:, None] * eps
    return CorruptedBatch(z, np.asarray(lam), eps, c_in)


def batch_loss(net: DenoiserNet, batch: CorruptedBatch):
    """Mean over the batch of ``||eps_theta - eps||^2``, with parameter gradients."""
    out, saved = net.forward(batch.z, batch.lam, batch.c, keep=True)
    resid = out - batch.eps
    n = resid.shape[0]
    loss = float(np.sum(resid**2) / n)
    grads = net.backward(saved, 2.0 * resid / n)
    return loss, grads


def loss_and_grad(net, x, c, rng, schedule, p_uncond):
    """Returns ``(loss, grads, batch)``; ``batch`` exposes the conditioning actually used."""
    if len(x) == 0:
        raise ConfigError("batch must be nonempty", "train.batch")
    batch = corrupt_batch(x, c, rng, schedule, p_uncond)
    loss, grads = batch_loss(net, batch)
    return loss, grads, batch


def learning_rate(cfg: TrainConfig, step: int) -> float:
    """Step size for 1-based ``step``: constant, or cosine-annealed from ``lr`` toward 0."""
    if cfg.lr_schedule == "constant":
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * (step - 1) / cfg.steps))


def train(net: DenoiserNet, world: GmmWorld, cfg: TrainConfig, schedule: Schedule,
          losses: list | None = None) -> DenoiserNet:
    """Run ``cfg.steps`` Adam updates on a copy of ``net`` and return it.

    Per-step losses are appended to ``losses`` when given.
    """
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.lr)
    for step in range(1, cfg.steps + 1):
        opt.lr = learning_rate(cfg, step)
        x, c = world.sample_data(rng, cfg.batch)
        loss, grads, _ = loss_and_grad(net, x, c, rng, schedule, cfg.p_uncond)
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at step {step}", step=step)
        opt.step(net.params, grads)
        if losses is not None:
            losses.append(loss)
        if step % 2000 == 0:
            log.info("step %d loss %.5f", step, loss)
    return net


# -- checkpoints --------------------------------------------------------------
#
# Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
# then num_params little-endian float64 values in param_order.

MAGIC = b"GLABCKPT"


def save_checkpoint(path, net: DenoiserNet, schedule: Schedule, meta: dict | None = None) -> None:
    header = {
        "format": "guidance-lab-checkpoint",
        "version": 1,
        "architecture": net.architecture(),
        "schedule": schedule.to_dict(),
        "param_order": [[k, list(s)] for k, s in net.param_shapes().items()],
        "num_params": net.num_params(),
        **(meta or {}),
    }
    head = json.dumps(header, sort_keys=True).encode()
    payload = net.flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload)


def load_checkpoint(path):
    """Returns ``(net, schedule, header)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (head_len,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    payload = data[16 + head_len:]
    n = int(header.get("num_params", -1))
    if len(payload) != 8 * n:
        raise CheckpointError(
            f"{path}: header declares {n} parameters but payload holds {len(payload) / 8:g}"
        )
    try:
        net = DenoiserNet.from_flat(header["architecture"], np.frombuffer(payload, dtype="<f8"))
    except (ConfigError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: header does not match payload ({exc})") from exc
    return net, Schedule.from_dict(header["schedule"]), header
