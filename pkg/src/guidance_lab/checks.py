"""Named analytic identity checks run by ``guidance-lab check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import process
from .config import default_world
from .guidance import cf_guided_eps, classifier_guided_eps
from .process import Latent, posterior_params, reverse_variance, transition_variance, x_from_eps
from .schedule import Schedule, alpha_sigma, lambda_cdf, sample_lambda, timestep_grid


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float


def fd_gradient(f, z, h=1e-3):
    """Fourth-order central difference gradient of scalar ``f`` at a single point."""
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (-f(z + 2 * e) + 8 * f(z + e) - 8 * f(z - e) + f(z - 2 * e)) / (12 * h)
    return g


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def _lam_pairs(rng, schedule, n):
    lam = np.asarray(sample_lambda(schedule, rng.random((n, 2))))
    lo, hi = np.minimum(lam[:, 0], lam[:, 1]), np.maximum(lam[:, 0], lam[:, 1])
    keep = lo < hi
    return lo[keep], hi[keep]


def run_checks(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    schedule = Schedule()
    world = default_world()
    results = []

    def record(name, error, tol):
        results.append(CheckResult(name, bool(error <= tol), float(error), tol))

    # schedule
    err = max(abs(sample_lambda(schedule, 0.0) - schedule.lambda_max),
              abs(sample_lambda(schedule, 1.0) - schedule.lambda_min))
    record("schedule.endpoints", err, 0.0)
    record("schedule.median", abs(sample_lambda(schedule, 0.5)), 0.0)
    u = rng.random(2000)
    record("schedule.cdf_roundtrip", float(np.max(np.abs(lambda_cdf(schedule, sample_lambda(schedule, u)) - u))), 1e-10)
    grid = timestep_grid(schedule, 64)
    record("schedule.grid_increasing", 0.0 if np.all(np.diff(grid) > 0) else 1.0, 0.0)
    lam = np.asarray(sample_lambda(schedule, u))
    a, s = alpha_sigma(lam)
    record("schedule.variance_preserving", float(np.max(np.abs(a**2 + s**2 - 1))), 4e-16)

    # forward / reverse process
    lo, hi = _lam_pairs(rng, schedule, 500)
    err = 0.0
    for l1, l2 in zip(lo, hi):
        a1, s1 = alpha_sigma(l1)
        a2, s2 = alpha_sigma(l2)
        composed = transition_variance(l1, l2) + (a1 / a2) ** 2 * s2**2
        err = max(err, abs(composed - s1**2) / s1**2)
    record("process.marginal_composition", err, 1e-12)

    err = 0.0
    x = rng.standard_normal(2)
    for l1, l2 in zip(lo, hi):
        a1, s1 = alpha_sigma(l1)
        a2, s2 = alpha_sigma(l2)
        # average the posterior over z ~ q(z_l1 | x): E[z] = a1 x, Var[z] = s1^2
        p = posterior_params(Latent(a1 * x, l1), x, l2)
        scale = np.exp(l1 - l2) * a2 / a1
        total = p.variance + scale**2 * s1**2
        err = max(err, abs(total - s2**2) / s2**2, _rel(p.mean, a2 * x))
    record("process.posterior_consistency", err, 1e-12)

    err = 0.0
    for l1, l2 in zip(lo[:50], hi[:50]):
        post = posterior_params(Latent(np.zeros(1), l1), np.zeros(1), l2).variance
        err = max(err, abs(reverse_variance(l1, l2, 0.0) - post) / post,
                  abs(reverse_variance(l1, l2, 1.0) - transition_variance(l1, l2)) / transition_variance(l1, l2))
    record("process.reverse_variance_endpoints", err, 0.0)

    err = 0.0
    for l in lam[:200]:
        xv, ev = rng.standard_normal(2), rng.standard_normal(2)
        a1, s1 = alpha_sigma(l)
        err = max(err, _rel(x_from_eps(Latent(a1 * xv + s1 * ev, l), ev), xv))
    record("process.x_from_eps_inverse", err, 1e-9)

    # guidance and the exact oracle
    z = 2.0 * rng.standard_normal((1000, world.dims))
    lam = np.asarray(sample_lambda(schedule, rng.random(1000)))
    c = rng.integers(0, world.num_classes, 1000)
    w = rng.uniform(0.0, 5.0, (1000, 1))
    _, sigma = alpha_sigma(lam)
    ec = world.exact_cond_eps(z, lam, c)
    eu = world.exact_uncond_eps(z, lam)
    grad = world.classifier_grad(z, lam, c)
    cf = cf_guided_eps(ec, eu, 1.0) + (w - 1.0) * (ec - eu)  # affine in w
    record("guidance.cf_affine_in_w", float(np.max(np.abs(cf - ((1 + w) * ec - w * eu)))), 1e-12)
    cg = ec - w * sigma[:, None] * grad
    record("oracle.cf_equals_classifier_guidance", float(np.max(np.abs((1 + w) * ec - w * eu - cg))), 1e-12)
    shifted = eu - (w + 1) * sigma[:, None] * grad
    record("oracle.weight_shift", float(np.max(np.abs(shifted - cg))), 1e-12)
    record("guidance.classifier_guided_eps",
           float(np.max(np.abs(classifier_guided_eps(ec, grad, sigma, 2.0) - (3 * ec - 2 * eu)))), 1e-12)
    post = world.bayes_posterior(z, lam)
    record("oracle.posterior_normalized", float(np.max(np.abs(post.sum(axis=1) - 1))), 1e-12)

    errs = {"cond": 0.0, "uncond": 0.0, "classifier": 0.0}
    for i in range(100):
        zi, li, ci = z[i], float(lam[i]), int(c[i])
        si = float(sigma[i])
        g = fd_gradient(lambda v: float(world.log_cond(v, li, ci)), zi)
        errs["cond"] = max(errs["cond"], _rel(ec[i], -si * g))
        g = fd_gradient(lambda v: float(world.log_marginal(v, li)), zi)
        errs["uncond"] = max(errs["uncond"], _rel(eu[i], -si * g))
        g = fd_gradient(lambda v: float(world.log_bayes_posterior(v, li)[ci]), zi)
        if np.linalg.norm(g) > 1e-8:
            errs["classifier"] = max(errs["classifier"], _rel(grad[i], g))
    record("oracle.cond_eps_finite_difference", errs["cond"], 1e-6)
    record("oracle.uncond_eps_finite_difference", errs["uncond"], 1e-6)
    record("oracle.classifier_grad_finite_difference", errs["classifier"], 1e-6)
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  max_error   tolerance"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}    {r.error:.3e}   {r.tolerance:.1e}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)


__all__ = ["CheckResult", "run_checks", "format_table", "fd_gradient", "process"]
