"""Reverse-time generation, inpainting and reconstruction.

All samplers integrate the reverse SDE
    dx = [f(x,t) - g(t)^2 s(x,t)] dt + g(t) dw
backward on a uniform grid from the horizon down to t_eps with
Euler-Maruyama, optionally followed by Langevin corrector sweeps per grid
point. Trajectories are batch-vectorized; the score function is any
callable s(x, t) -> (n, d), typically a ScoreNet or the analytic oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import csv

import numpy as np

from . import sde as sde_mod
from .errors import NumericalError
from .rng import Rng
from .sde import SdeSpec


@dataclass
class SampleBatch:
    """Generated points plus enough metadata to replay the run."""

    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path):
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(d)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader]
        return cls(points=np.asarray(rows, dtype=np.float64).reshape(-1, len(header)))


def _dim_of(score_fn, dim):
    if dim is not None:
        return int(dim)
    if hasattr(score_fn, "input_dim"):
        return int(score_fn.input_dim)
    raise ValueError("pass dim= explicitly for score functions without .input_dim")


def _em_step(score_fn, spec, x, t, dt, rng, noise_scale):
    g = float(sde_mod.diffusion(spec, t))
    drift = sde_mod.drift(spec, x, t) - g * g * score_fn(x, t)
    x = x + drift * dt
    if noise_scale != 0.0:
        x = x + noise_scale * g * np.sqrt(-dt) * rng.normal(x.shape)
    return x


def _langevin_correct(score_fn, x, t, snr, rng):
    s = score_fn(x, t)
    z = rng.normal(x.shape)
    s_norm = np.sqrt((s * s).sum(axis=1)).mean()
    z_norm = np.sqrt((z * z).sum(axis=1)).mean()
    if s_norm == 0.0:
        return x
    eps = 2.0 * (snr * z_norm / s_norm) ** 2
    return x + eps * s + np.sqrt(2.0 * eps) * z


def _integrate(score_fn, spec, x, ts, rng, corrector_steps=0, snr=0.0, noise_scale=1.0):
    for i in range(ts.size - 1):
        t, t_next = float(ts[i]), float(ts[i + 1])
        x = _em_step(score_fn, spec, x, t, t_next - t, rng, noise_scale)
        for _ in range(corrector_steps):
            x = _langevin_correct(score_fn, x, t_next, snr, rng)
        if not np.isfinite(x).all():
            raise NumericalError(f"sampler state became non-finite at step {i} (t={t_next:.5f})")
    return x


def reverse_sde_sample(score_fn, spec: SdeSpec, n: int, n_steps: int, rng: Rng,
                       dim=None, noise_scale: float = 1.0) -> SampleBatch:
    """Draw n points by integrating the reverse SDE from the prior.

    noise_scale=0 is a test hook that suppresses the Brownian term, turning
    the integration into a deterministic trajectory.
    """
    if n_steps < 10:
        raise ValueError("reverse_sde_sample: need n_steps >= 10")
    d = _dim_of(score_fn, dim)
    ts = np.linspace(spec.horizon, spec.t_eps, n_steps + 1)
    x = sde_mod.prior_sample(spec, rng, n, d)
    x = _integrate(score_fn, spec, x, ts, rng, noise_scale=noise_scale)
    return SampleBatch(points=x, meta={"kind": spec.kind, "n_steps": n_steps, "sampler": "em"})


def pc_sample(score_fn, spec: SdeSpec, n: int, n_steps: int, langevin_snr: float,
              corrector_steps: int, rng: Rng, dim=None) -> SampleBatch:
    """Predictor-corrector sampling; corrector_steps=0 reduces to the EM path."""
    if n_steps < 10:
        raise ValueError("pc_sample: need n_steps >= 10")
    if corrector_steps < 0:
        raise ValueError("pc_sample: corrector_steps must be >= 0")
    d = _dim_of(score_fn, dim)
    ts = np.linspace(spec.horizon, spec.t_eps, n_steps + 1)
    x = sde_mod.prior_sample(spec, rng, n, d)
    x = _integrate(score_fn, spec, x, ts, rng,
                   corrector_steps=corrector_steps, snr=langevin_snr)
    return SampleBatch(points=x, meta={"kind": spec.kind, "n_steps": n_steps, "sampler": "pc",
                                       "snr": langevin_snr, "corrector_steps": corrector_steps})


def inpaint(score_fn, spec: SdeSpec, observed: np.ndarray, mask: np.ndarray,
            n: int, n_steps: int, rng: Rng) -> SampleBatch:
    """Complete free coordinates conditioned on the observed ones.

    `mask` is True on observed coordinates. At every reverse step the
    observed coordinates are replaced by forward-diffused versions of their
    values at the current time (replacement conditioning).
    """
    observed = np.asarray(observed, dtype=np.float64).ravel()
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.shape != observed.shape:
        raise ValueError("inpaint: observed and mask must have the same length")
    if mask.all() or not mask.any():
        raise ValueError("inpaint: mask needs at least one observed and one free coordinate")
    if n_steps < 10:
        raise ValueError("inpaint: need n_steps >= 10")
    d = observed.size
    ts = np.linspace(spec.horizon, spec.t_eps, n_steps + 1)
    x = sde_mod.prior_sample(spec, rng, n, d)

    def replace_observed(x, t):
        m = float(sde_mod.mean_coeff(spec, t))
        s = float(sde_mod.marginal_std(spec, t))
        noisy = m * observed[mask] + s * rng.normal((n, int(mask.sum())))
        x[:, mask] = noisy
        return x

    x = replace_observed(x, spec.horizon)
    for i in range(n_steps):
        t, t_next = float(ts[i]), float(ts[i + 1])
        x = _em_step(score_fn, spec, x, t, t_next - t, rng, 1.0)
        x = replace_observed(x, t_next)
        if not np.isfinite(x).all():
            raise NumericalError(f"inpaint state became non-finite at step {i}")
    return SampleBatch(points=x, meta={"kind": spec.kind, "n_steps": n_steps,
                                       "sampler": "inpaint"})


def reconstruct(score_fn, spec: SdeSpec, x: np.ndarray, t_star: float, rng: Rng,
                n_steps: int = 100) -> np.ndarray:
    """Forward-perturb points to t_star, then integrate the reverse SDE back.

    Small t_star keeps reconstructions close to the inputs wherever the
    model score matches the data score.
    """
    if not (spec.t_eps <= t_star <= spec.horizon):
        raise ValueError(f"reconstruct: t_star outside [{spec.t_eps}, {spec.horizon}]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m = float(sde_mod.mean_coeff(spec, t_star))
    s = float(sde_mod.marginal_std(spec, t_star))
    x_t = m * x + s * rng.normal(x.shape)
    ts = np.linspace(t_star, spec.t_eps, n_steps + 1)
    return _integrate(score_fn, spec, x_t, ts, rng)
