"""Desk-scale evaluation: oracle score error, Bayes-classifier confidence
(Inception-score formula with the exact classifier), Fréchet distance on raw
coordinates, and guidance-strength sweeps.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import DomainError
from .guidance import GuidanceConfig
from .sampler import SamplerConfig, sample_batch
from .schedule import DEFAULT_LAMBDA_MAX, Schedule, alpha_sigma, sample_lambda
from .world import GmmWorld

COV_JITTER = 1e-8


class DegenerateCovarianceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ProbeSpec:
    strata: int = 16
    per_stratum: int = 512
    seed: int = 1234


@dataclass
class ScoreMse:
    overall: float
    per_stratum: np.ndarray  # mean squared error per lambda stratum
    stratum_edges: np.ndarray  # lambda values bounding each stratum (decreasing)


def score_mse(denoiser, world: GmmWorld, schedule: Schedule = Schedule(),
              probes: ProbeSpec = ProbeSpec()) -> ScoreMse:
    """Mean ``||eps(z, lam, c) - eps*(z, lam, c)||^2`` over probes stratified in lam.

    Strata are equal-probability bins of the training distribution p(lam),
    i.e. equal-width bins of the uniform variate ``u``.
    """
    rng = np.random.default_rng(probes.seed)
    edges_u = np.linspace(0.0, 1.0, probes.strata + 1)
    per = np.empty(probes.strata)
    for k in range(probes.strata):
        u = rng.uniform(edges_u[k], edges_u[k + 1], probes.per_stratum)
        lam = np.asarray(sample_lambda(schedule, u))
        x, c = world.sample_data(rng, probes.per_stratum)
        alpha, sigma = alpha_sigma(lam)
        z = alpha[:, None] * x + sigma[:, None] * rng.standard_normal(x.shape)
        err = denoiser(z, lam, c) - world.exact_cond_eps(z, lam, c)
        per[k] = float(np.mean(np.sum(err**2, axis=1)))
    return ScoreMse(float(per.mean()), per, np.asarray(sample_lambda(schedule, edges_u)))


def data_posterior(world: GmmWorld, samples, lam: float = DEFAULT_LAMBDA_MAX):
    """Bayes posterior of clean samples, evaluated at the schedule's clean end."""
    return world.bayes_posterior(np.asarray(samples, dtype=float), lam)


def confidence_score(samples, world: GmmWorld, lam: float = DEFAULT_LAMBDA_MAX) -> float:
    """``exp(E_x KL(p(c|x) || p(c)))`` with ``p(c)`` the sample-average posterior."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        raise DomainError("confidence_score needs at least one sample")
    post = data_posterior(world, samples, lam)
    marginal = post.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(post > 0, post * (np.log(post) - np.log(marginal)), 0.0)
    kl = terms.sum(axis=1)
    return float(np.exp(max(kl.mean(), 0.0)))


def class_entropy(samples, world: GmmWorld, lam: float = DEFAULT_LAMBDA_MAX) -> float:
    """Average entropy (nats) of each sample's Bayes class histogram ``p(c|x)``."""
    post = data_posterior(world, samples, lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(post > 0, post * np.log(post), 0.0).sum(axis=1)
    return float(h.mean()) if h.size else 0.0


def _psd_sqrt(m):
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a, b) -> float:
    """``||m_a - m_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`` from fitted Gaussians.

    The trace of the product root is computed as ``tr sqrt(S_a^½ S_b S_a^½)``,
    which is symmetric and PSD. Rank-deficient covariances get ``1e-8 I`` added
    and raise :class:`DegenerateCovarianceWarning`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DomainError(f"sample sets must be (n, d) with equal d, got {a.shape} and {b.shape}")
    d = a.shape[1]
    if min(len(a), len(b)) < d + 1:
        raise DomainError(f"need at least d+1={d + 1} points per set")
    mean_a, mean_b = a.mean(0), b.mean(0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    degenerate = False
    for cov in (cov_a, cov_b):
        vals = np.linalg.eigvalsh(cov)
        if vals.min() <= 1e-12 * max(vals.max(), 1.0):
            degenerate = True
    if degenerate:
        warnings.warn("degenerate covariance regularized by 1e-8 I", DegenerateCovarianceWarning)
        cov_a = cov_a + COV_JITTER * np.eye(d)
        cov_b = cov_b + COV_JITTER * np.eye(d)
    root_a = _psd_sqrt(cov_a)
    cross = np.linalg.eigvalsh(root_a @ cov_b @ root_a)
    tr_cross = float(np.sum(np.sqrt(np.clip(cross, 0.0, None))))
    value = float(np.sum((mean_a - mean_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_cross)
    return max(value, 0.0)


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    w: float
    confidence: float
    frechet: float
    class_entropy: float
    n: int
    seed: int


def stream_seeds(seed: int):
    """Independent seeds for (class labels, sampler chains, reference data)."""
    children = np.random.SeedSequence(seed).spawn(3)
    return [int(c.generate_state(1)[0]) for c in children]


def sweep_labels(world: GmmWorld, n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(stream_seeds(seed)[0]).choice(world.num_classes, n, p=world.priors)


def reference_sample(world: GmmWorld, n: int, seed: int) -> np.ndarray:
    x, _ = world.sample_data(np.random.default_rng(stream_seeds(seed)[2]), n)
    return x


def sweep(world: GmmWorld, denoiser, ws, sampler: SamplerConfig, n: int, seed: int,
          mode: str = "classifier-free") -> list:
    """One :class:`SweepRow` per guidance strength.

    Every ``w`` reuses the same class labels, the same chain noise, and the same
    reference sample, so rows differ only through ``w``.
    """
    labels = sweep_labels(world, n, seed)
    reference = reference_sample(world, max(n, world.dims + 1), seed)
    chain_seed = stream_seeds(seed)[1]
    rows = []
    for w in ws:
        x, _ = sample_batch(denoiser, GuidanceConfig(mode, float(w)), sampler, labels,
                            np.random.default_rng(chain_seed), world=world)
        lam_clean = sampler.schedule.lambda_max
        rows.append(
            SweepRow(
                w=float(w),
                confidence=confidence_score(x, world, lam_clean),
                frechet=frechet_distance(x, reference) if n > world.dims else float("nan"),
                class_entropy=class_entropy(x, world, lam_clean),
                n=int(n),
                seed=int(seed),
            )
        )
    return rows


SWEEP_COLUMNS = [f.name for f in fields(SweepRow)]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, extra: dict | None = None) -> str:
    """Render rows as CSV text; ``extra`` maps leading column names to per-row values."""
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(extra) + SWEEP_COLUMNS)
    for i, row in enumerate(rows):
        writer.writerow([_fmt(vals[i]) for vals in extra.values()] + [_fmt(v) for v in astuple(row)])
    return buf.getvalue()
