"""Scikit-learn style estimator facade over the training/sampling/likelihood
machinery, so the model composes with pipelines, grid search and cloning.

The estimator follows the density-estimator convention (fit / sample /
score_samples, like sklearn's mixture models): `fit(X, y)` trains the score
model on X, where the optional y flags rows to be unlearned (1 = forget);
`sample` integrates the reverse SDE; `score_samples` returns per-point log
density through the probability-flow ODE.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .likelihood import IntegratorSettings, nll
from .rng import Rng
from .sampling import reverse_sde_sample
from .scorenet import ScoreNet
from .sde import SdeSpec
from .training import MODES, SplitDataset, TrainPlan, train


class ScoreSdeDensity(BaseEstimator):
    """Continuous-time score-SDE generative density model with unlearning.

    Parameters
    ----------
    mode : one of "standard", "unseen", "ort", "obt". Standard trains on all
        rows; unseen drops flagged rows; ort/obt add the orthogonal or
        obtuse moderation loss on flagged rows.
    alpha : retain-loss weight in the combined objective.
    update_interval : apply the forget loss every k-th step.
    steps, batch_size, learning_rate : optimizer schedule.
    sde_kind : "ve" or "vp" forward diffusion.
    hidden, time_freqs : score-network architecture.
    sample_steps : reverse-SDE grid size used by `sample`.
    random_state : seed controlling init, batching and sampling.
    """

    def __init__(self, mode="standard", alpha=0.99, update_interval=4,
                 steps=2000, batch_size=256, learning_rate=2e-4,
                 sde_kind="vp", sigma_min=0.01, sigma_max=50.0,
                 beta_min=0.1, beta_max=20.0, horizon=1.0, t_eps=1e-3,
                 hidden=(128, 128), time_freqs=64, lambda_kind="kernel_var",
                 sample_steps=500, nll_rtol=1e-5, nll_atol=1e-5, random_state=0):
        self.mode = mode
        self.alpha = alpha
        self.update_interval = update_interval
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.sde_kind = sde_kind
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.horizon = horizon
        self.t_eps = t_eps
        self.hidden = hidden
        self.time_freqs = time_freqs
        self.lambda_kind = lambda_kind
        self.sample_steps = sample_steps
        self.nll_rtol = nll_rtol
        self.nll_atol = nll_atol
        self.random_state = random_state

    def _sde(self) -> SdeSpec:
        return SdeSpec(kind=self.sde_kind, horizon=self.horizon,
                       sigma_min=self.sigma_min, sigma_max=self.sigma_max,
                       beta_min=self.beta_min, beta_max=self.beta_max,
                       t_eps=self.t_eps)

    def fit(self, X, y=None):
        """Train the score model on X; y (0/1 or bool) flags forget rows."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if self.mode not in ("standard", "unseen", "ort", "obt"):
            raise ValueError(f"mode must be standard/unseen/ort/obt, got {self.mode!r}")
        if y is None:
            flags = np.zeros(X.shape[0], dtype=bool)
        else:
            flags = np.asarray(y).astype(bool).ravel()
            if flags.shape[0] != X.shape[0]:
                raise ValueError("y must have one flag per row of X")
        if self.mode in ("ort", "obt") and not flags.any():
            raise ValueError(f"mode {self.mode!r} needs at least one flagged row in y")
        if not (~flags).any():
            raise ValueError("at least one row must be unflagged (retain data)")
        data = SplitDataset(retain=X[~flags], forget=X[flags])
        spec = self._sde()
        plan = TrainPlan(mode=self.mode, alpha=self.alpha,
                         update_interval=self.update_interval, steps=self.steps,
                         batch_size=self.batch_size, learning_rate=self.learning_rate,
                         lambda_kind=self.lambda_kind, seed=int(self.random_state))
        net = ScoreNet(seed=int(self.random_state), input_dim=X.shape[1],
                       widths=tuple(self.hidden), time_freqs=self.time_freqs, sde=spec)
        net, curve = train(plan, data, spec, net)
        self.net_ = net
        self.sde_ = spec
        self.loss_curve_ = curve
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples=100, random_state=None):
        """Draw n_samples points by reverse-SDE integration."""
        check_is_fitted(self, "net_")
        seed = self.random_state if random_state is None else random_state
        batch = reverse_sde_sample(self.net_, self.sde_, int(n_samples),
                                   self.sample_steps, Rng(int(seed)).child(12))
        return batch.points

    def score_samples(self, X):
        """Log density of each row of X, in nats (probability-flow ODE)."""
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        settings = IntegratorSettings(rtol=self.nll_rtol, atol=self.nll_atol)
        return -nll(self.net_, self.sde_, X, settings).nll

    def score(self, X, y=None):
        """Mean log density of X under the fitted model."""
        return float(np.mean(self.score_samples(X)))
