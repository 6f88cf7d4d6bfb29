"""Forward diffusion schedules and their Gaussian perturbation kernels.

Two continuous-time diffusions on t in [0, T] are supported:

  ve:  dx = g(t) dw                       with g(t) = sigma(t) * sqrt(2 log(smax/smin) / T)
       and sigma(t) = smin * (smax/smin)^(t/T); kernel N(x0, sigma(t)^2 I).

  vp:  dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw
       with beta(t) = bmin + (t/T)(bmax - bmin); kernel mean
       x0 * exp(-t^2 (bmax-bmin)/(4T) - t bmin / 2) and variance
       1 - exp(-t^2 (bmax-bmin)/(2T) - t bmin).

The kernels are closed form; no forward simulation happens outside tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng

VE = "ve"
VP = "vp"


@dataclass(frozen=True)
class SdeSpec:
    """Schedule parameters of one forward diffusion."""

    kind: str = VE
    horizon: float = 1.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    beta_min: float = 0.1
    beta_max: float = 20.0
    t_eps: float = 1e-3

    def __post_init__(self):
        if self.kind not in (VE, VP):
            raise ValueError(f"SdeSpec.kind must be 've' or 'vp', got {self.kind!r}")
        if not (0.0 < self.t_eps < self.horizon):
            raise ValueError("SdeSpec: need 0 < t_eps < horizon")
        if self.kind == VE and not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError("SdeSpec: need 0 < sigma_min < sigma_max for 've'")
        if self.kind == VP and not (0.0 <= self.beta_min < self.beta_max):
            raise ValueError("SdeSpec: need 0 <= beta_min < beta_max for 'vp'")


@dataclass(frozen=True)
class KernelMoments:
    """Mean and (scalar) standard deviation of p(x_t | x_0)."""

    mean: np.ndarray
    std: float | np.ndarray


def _check_t(spec: SdeSpec, t, lo: float):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < lo - 1e-12) or np.any(t > spec.horizon + 1e-12):
        raise ValueError(f"t={t} outside [{lo}, {spec.horizon}]")
    return t


def beta(spec: SdeSpec, t):
    """Linear vp noise rate beta(t); only meaningful for kind 'vp'."""
    t = np.asarray(t, dtype=np.float64)
    return spec.beta_min + t * (spec.beta_max - spec.beta_min) / spec.horizon


def drift(spec: SdeSpec, x: np.ndarray, t):
    t = _check_t(spec, t, 0.0)
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == VE:
        return np.zeros_like(x)
    b = beta(spec, t)
    if np.ndim(b) == 1 and x.ndim == 2:
        b = b[:, None]
    return -0.5 * b * x


def diffusion(spec: SdeSpec, t):
    t = _check_t(spec, t, 0.0)
    if spec.kind == VE:
        log_ratio = np.log(spec.sigma_max / spec.sigma_min)
        sigma = spec.sigma_min * (spec.sigma_max / spec.sigma_min) ** (t / spec.horizon)
        return sigma * np.sqrt(2.0 * log_ratio / spec.horizon)
    return np.sqrt(beta(spec, t))


def mean_coeff(spec: SdeSpec, t):
    """Scale factor m(t) applied to x0 by the kernel mean."""
    t = np.asarray(t, dtype=np.float64)
    if spec.kind == VE:
        return np.ones_like(t)
    dbeta = spec.beta_max - spec.beta_min
    return np.exp(-0.25 * t * t * dbeta / spec.horizon - 0.5 * t * spec.beta_min)


def marginal_std(spec: SdeSpec, t):
    """Kernel standard deviation at time t (scalar in, scalar out)."""
    t = np.asarray(t, dtype=np.float64)
    if spec.kind == VE:
        return spec.sigma_min * (spec.sigma_max / spec.sigma_min) ** (t / spec.horizon)
    dbeta = spec.beta_max - spec.beta_min
    var = 1.0 - np.exp(-0.5 * t * t * dbeta / spec.horizon - t * spec.beta_min)
    return np.sqrt(var)


def perturb_kernel(spec: SdeSpec, x0: np.ndarray, t) -> KernelMoments:
    """Moments of p(x_t | x_0). Rejects t below t_eps (kernel degenerate)."""
    t = _check_t(spec, t, spec.t_eps)
    x0 = np.asarray(x0, dtype=np.float64)
    m = mean_coeff(spec, t)
    if np.ndim(m) == 1 and x0.ndim == 2:
        mean = m[:, None] * x0
    else:
        mean = m * x0
    std = marginal_std(spec, t)
    return KernelMoments(mean=mean, std=std if np.ndim(std) else float(std))


def kernel_score(spec: SdeSpec, x_t: np.ndarray, x0: np.ndarray, t) -> np.ndarray:
    """Gradient of log p(x_t | x_0) w.r.t. x_t: (mean - x_t) / std^2."""
    mom = perturb_kernel(spec, x0, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    std = np.asarray(mom.std)
    if std.ndim == 1 and x_t.ndim == 2:
        std = std[:, None]
    return (mom.mean - x_t) / (std * std)


def prior_logpdf(spec: SdeSpec, x: np.ndarray):
    """Log density of the t=T prior: N(0, smax^2 I) for ve, N(0, I) for vp."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    d = x.shape[1]
    s2 = spec.sigma_max**2 if spec.kind == VE else 1.0
    out = -0.5 * (x * x).sum(axis=1) / s2 - 0.5 * d * np.log(2.0 * np.pi * s2)
    return float(out[0]) if squeeze else out


def prior_sample(spec: SdeSpec, rng: Rng, n: int, d: int) -> np.ndarray:
    scale = spec.sigma_max if spec.kind == VE else 1.0
    return scale * rng.normal((n, d))
