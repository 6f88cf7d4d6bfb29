"""Score-SDE generative modeling on low-dimensional data with
moderated-score unlearning objectives."""

from .autodiff import Node, Tape, backward
from .errors import (CheckpointError, ConfigError, IntegrationError,
                     NumericalError, TrainingDiverged)
from .estimator import ScoreSdeDensity
from .likelihood import IntegratorSettings, NllResult, nll, nll_point, nll_report
from .metrics import (AlignmentStats, ScoreField, disk, field_alignment,
                      score_field, unlearning_ratio)
from .mixture import (MixtureSpec, analytic_score_fn, bayes_component,
                      mixture_logpdf, mixture_sample, mixture_score, toy_mixture)
from .rng import Rng, gaussian_sample
from .sampling import SampleBatch, inpaint, pc_sample, reconstruct, reverse_sde_sample
from .scorenet import ScoreNet, divergence
from .sde import KernelMoments, SdeSpec, diffusion, drift, kernel_score, perturb_kernel, prior_logpdf
from .training import (Adam, LossCurve, SplitDataset, TrainPlan, dsm_loss,
                       msgm_step, obtuse_loss, ortho_loss, train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "AlignmentStats", "CheckpointError", "ConfigError",
    "IntegrationError", "IntegratorSettings", "KernelMoments", "LossCurve",
    "MixtureSpec", "NllResult", "Node", "NumericalError", "Rng",
    "SampleBatch", "ScoreField", "ScoreNet", "ScoreSdeDensity", "SdeSpec",
    "SplitDataset", "Tape", "TrainPlan", "TrainingDiverged",
    "analytic_score_fn", "backward", "bayes_component", "diffusion", "disk",
    "divergence", "drift", "dsm_loss", "field_alignment", "gaussian_sample",
    "inpaint", "kernel_score", "mixture_logpdf", "mixture_sample",
    "mixture_score", "msgm_step", "nll", "nll_point", "nll_report",
    "obtuse_loss", "ortho_loss", "pc_sample", "perturb_kernel",
    "prior_logpdf", "reconstruct", "reverse_sde_sample", "score_field",
    "toy_mixture", "train", "unlearning_ratio",
]
