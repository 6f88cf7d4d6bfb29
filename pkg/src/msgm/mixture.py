"""Analytic Gaussian-mixture ground truth used for data synthesis and oracles.

The mixture doubles as the experiment's dataset generator and as the
evaluation oracle: closed-form log density, score, component posteriors,
and the exact perturbed mixture obtained by pushing every component through
the diffusion kernel (a Gaussian convolution, so still a Gaussian mixture).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sde as sde_mod
from .rng import Rng
from .sde import SdeSpec

SPLIT_ALL = "all"
SPLIT_SFG = "sfg"
SPLIT_NSFG = "nsfg"


@dataclass
class MixtureSpec:
    """Weighted Gaussian components with a boolean not-suitable flag each."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    nsfg: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)
    _inv: np.ndarray = field(init=False, repr=False)
    _logdet: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covs = np.asarray(self.covs, dtype=np.float64)
        self.nsfg = np.asarray(self.nsfg, dtype=bool)
        k, d = self.means.shape
        if self.covs.shape != (k, d, d):
            raise ValueError(f"covs must have shape {(k, d, d)}, got {self.covs.shape}")
        if self.weights.shape != (k,) or self.nsfg.shape != (k,):
            raise ValueError("weights/nsfg must have one entry per component")
        if np.any(self.weights <= 0):
            raise ValueError("component weights must be positive")
        self.weights = self.weights / self.weights.sum()
        if not np.allclose(self.covs, np.swapaxes(self.covs, 1, 2)):
            raise ValueError("covariances must be symmetric")
        self._chol = np.linalg.cholesky(self.covs)  # raises if not SPD
        self._inv = np.linalg.inv(self.covs)
        self._logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def toy_mixture() -> MixtureSpec:
    """Three unit-variance 2D components at (-2,-2), (0,0), (2,2).

    Weights 0.4 / 0.2 / 0.4; the center component is the one to unlearn.
    """
    return MixtureSpec(
        weights=np.array([0.4, 0.2, 0.4]),
        means=np.array([[-2.0, -2.0], [0.0, 0.0], [2.0, 2.0]]),
        covs=np.stack([np.eye(2)] * 3),
        nsfg=np.array([False, True, False]),
    )


def _split_mask(mix: MixtureSpec, split: str) -> np.ndarray:
    if split == SPLIT_ALL:
        return np.ones(mix.n_components, dtype=bool)
    if split == SPLIT_SFG:
        return ~mix.nsfg
    if split == SPLIT_NSFG:
        return mix.nsfg.copy()
    raise ValueError(f"unknown split {split!r}")


def mixture_sample(mix: MixtureSpec, n: int, rng: Rng, split: str = SPLIT_ALL,
                   return_components: bool = False):
    """Ancestral sampling, optionally restricted to one split of components."""
    mask = _split_mask(mix, split)
    if not mask.any():
        raise ValueError(f"split {split!r} selects no components")
    idx = np.flatnonzero(mask)
    w = mix.weights[idx]
    w = w / w.sum()
    cum = np.cumsum(w)
    u = rng.uniform(0.0, 1.0, n)
    comp = idx[np.searchsorted(cum, u, side="right").clip(0, idx.size - 1)]
    z = rng.normal((n, mix.dim))
    x = mix.means[comp] + np.einsum("nij,nj->ni", mix._chol[comp], z)
    if return_components:
        return x, comp
    return x


def _component_logpdfs(mix: MixtureSpec, x: np.ndarray) -> np.ndarray:
    """log N(x; mu_k, Sigma_k) for every component, shape (N, K)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = mix.dim
    diff = x[:, None, :] - mix.means[None, :, :]  # (N, K, d)
    quad = np.einsum("nki,kij,nkj->nk", diff, mix._inv, diff)
    return -0.5 * (quad + d * np.log(2.0 * np.pi) + mix._logdet[None, :])


def mixture_logpdf(mix: MixtureSpec, x: np.ndarray):
    """Log density of the mixture, evaluated with log-sum-exp stability."""
    squeeze = np.asarray(x).ndim == 1
    lp = _component_logpdfs(mix, x) + np.log(mix.weights)[None, :]
    m = lp.max(axis=1)
    out = m + np.log(np.exp(lp - m[:, None]).sum(axis=1))
    return float(out[0]) if squeeze else out


def mixture_score(mix: MixtureSpec, x: np.ndarray):
    """Gradient of log density: posterior-weighted Gaussian scores."""
    xa = np.atleast_2d(np.asarray(x, dtype=np.float64))
    squeeze = np.asarray(x).ndim == 1
    lp = _component_logpdfs(mix, xa) + np.log(mix.weights)[None, :]
    m = lp.max(axis=1, keepdims=True)
    r = np.exp(lp - m)
    r = r / r.sum(axis=1, keepdims=True)  # (N, K) posteriors
    diff = mix.means[None, :, :] - xa[:, None, :]  # (N, K, d)
    comp_scores = np.einsum("kij,nkj->nki", mix._inv, diff)
    out = (r[:, :, None] * comp_scores).sum(axis=1)
    return out[0] if squeeze else out


def bayes_component(mix: MixtureSpec, x: np.ndarray):
    """Posterior-argmax component assignment plus the full posterior.

    Ties break toward the lowest component index.
    """
    xa = np.atleast_2d(np.asarray(x, dtype=np.float64))
    squeeze = np.asarray(x).ndim == 1
    lp = _component_logpdfs(mix, xa) + np.log(mix.weights)[None, :]
    m = lp.max(axis=1, keepdims=True)
    r = np.exp(lp - m)
    r = r / r.sum(axis=1, keepdims=True)
    idx = lp.argmax(axis=1)
    if squeeze:
        return int(idx[0]), r[0]
    return idx, r


def nsfg_posterior(mix: MixtureSpec, x: np.ndarray) -> np.ndarray:
    """Total posterior mass on flagged components, per point."""
    _, post = bayes_component(mix, np.atleast_2d(x))
    return post[:, mix.nsfg].sum(axis=1)


def perturbed(mix: MixtureSpec, spec: SdeSpec, t: float) -> MixtureSpec:
    """The mixture diffused to time t: means scaled, kernel variance added."""
    m = float(sde_mod.mean_coeff(spec, t))
    s = float(sde_mod.marginal_std(spec, t))
    covs = (m * m) * mix.covs + (s * s) * np.eye(mix.dim)[None, :, :]
    return MixtureSpec(
        weights=mix.weights.copy(),
        means=m * mix.means,
        covs=covs,
        nsfg=mix.nsfg.copy(),
    )


def analytic_score_fn(mix: MixtureSpec, spec: SdeSpec):
    """Exact time-dependent score of the diffused mixture, as s(x, t)."""

    def score(x, t):
        return mixture_score(perturbed(mix, spec, float(t)), x)

    return score
