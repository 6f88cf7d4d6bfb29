"""Training objectives and the optimizer loop.

Modes:
  standard      denoising score matching on retain + forget data pooled
  unseen        denoising score matching on retain data only
  ort           retain loss plus squared score/kernel-score dot product on
                forget batches (pushes the model score orthogonal to the
                forget kernel score)
  obt           retain loss plus the raw (unsquared) dot product (pushes the
                model score into the negatively correlated half-space)
  finetune_ort / finetune_obt
                same objectives, by convention starting from a trained
                checkpoint instead of a fresh init

The forget-side loss is applied every `update_interval`-th step with weight
(1 - alpha); every step applies the retain loss. With alpha exactly 1 the
forget path is skipped entirely, so the run is bit-identical to unseen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import sde as sde_mod
from .autodiff import Node, backward
from .errors import TrainingDiverged
from .rng import Rng
from .scorenet import ScoreNet
from .sde import SdeSpec

MODES = ("standard", "unseen", "ort", "obt", "finetune_ort", "finetune_obt")
MSGM_MODES = ("ort", "obt", "finetune_ort", "finetune_obt")
LAMBDA_KINDS = ("kernel_var", "one")


@dataclass(frozen=True)
class TrainPlan:
    """Training regime descriptor."""

    mode: str = "standard"
    alpha: float = 0.99
    update_interval: int = 4
    steps: int = 50_000
    batch_size: int = 512
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_kind: str = "kernel_var"
    seed: int = 0
    obtuse_hinge: bool = False
    loss_guard: float = 1e6

    def __post_init__(self):
        problems = []
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.alpha <= 1.0):
            problems.append(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.update_interval < 1:
            problems.append("update_interval must be >= 1")
        if self.steps < 0 or self.batch_size < 1:
            problems.append("steps must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if self.lambda_kind not in LAMBDA_KINDS:
            problems.append(f"lambda_kind must be one of {LAMBDA_KINDS}")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class SplitDataset:
    """Retain (suitable) and forget (not-suitable) point sets."""

    retain: np.ndarray
    forget: np.ndarray

    def __post_init__(self):
        self.retain = np.atleast_2d(np.asarray(self.retain, dtype=np.float64))
        self.forget = np.asarray(self.forget, dtype=np.float64)
        if self.forget.size == 0:
            self.forget = np.zeros((0, self.retain.shape[1]))
        self.forget = np.atleast_2d(self.forget)
        if self.forget.shape[1] != self.retain.shape[1]:
            raise ValueError("retain and forget must share the feature dimension")

    @property
    def pooled(self) -> np.ndarray:
        return np.concatenate([self.retain, self.forget], axis=0)


@dataclass
class LossCurve:
    """Per-step loss records; forget-loss entries are None when not computed."""

    steps: list = field(default_factory=list)
    loss_g: list = field(default_factory=list)
    loss_f: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, step, lg, lf, total):
        self.steps.append(int(step))
        self.loss_g.append(float(lg))
        self.loss_f.append(None if lf is None else float(lf))
        self.total.append(float(total))

    def __len__(self):
        return len(self.steps)

    def tail_mean_g(self, n: int) -> float:
        vals = self.loss_g[-n:]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss_g", "loss_f", "total"])
            for s, lg, lf, tot in zip(self.steps, self.loss_g, self.loss_f, self.total):
                w.writerow([s, repr(lg), "" if lf is None else repr(lf), repr(tot)])

    @classmethod
    def from_csv(cls, path) -> "LossCurve":
        curve = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                lf = row["loss_f"]
                curve.append(int(row["step"]), float(row["loss_g"]),
                             None if lf == "" else float(lf), float(row["total"]))
        return curve


class Adam:
    """Adam over the flat parameter vector of a tape."""

    def __init__(self, size, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    @classmethod
    def from_plan(cls, size, plan: TrainPlan) -> "Adam":
        return cls(size, plan.learning_rate, plan.adam_beta1, plan.adam_beta2, plan.adam_eps)

    def step(self, values: np.ndarray, grad: np.ndarray):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _perturb(net: ScoreNet, spec: SdeSpec, batch: np.ndarray, rng: Rng, lambda_kind: str):
    """Draw per-row times and noise; return model output node and targets."""
    b, d = batch.shape
    t = rng.uniform(spec.t_eps, spec.horizon, b)
    z = rng.normal((b, d))
    std = np.asarray(sde_mod.marginal_std(spec, t))
    mean = np.asarray(sde_mod.mean_coeff(spec, t))[:, None] * batch
    x_t = mean + std[:, None] * z
    target = -(z / std[:, None])  # kernel score (mean - x_t) / std^2
    lam = std * std if lambda_kind == "kernel_var" else np.ones(b)
    out = net.forward_nodes(x_t, t)
    return out, target, lam


def dsm_loss(net: ScoreNet, spec: SdeSpec, batch: np.ndarray, rng: Rng,
             lambda_kind: str = "kernel_var") -> Node:
    """Weighted denoising score-matching loss, mean over the batch."""
    if batch.shape[0] == 0:
        raise ValueError("dsm_loss: empty batch")
    out, target, lam = _perturb(net, spec, batch, rng, lambda_kind)
    diff = ad.sub(out, target)
    per_row = ad.vsum(ad.square(diff), axis=1)
    return ad.vmean(ad.mul(per_row, lam))


def ortho_loss(net: ScoreNet, spec: SdeSpec, batch_f: np.ndarray, rng: Rng,
               lambda_kind: str = "kernel_var") -> Node:
    """Squared dot product between model score and forget kernel score."""
    if batch_f.shape[0] == 0:
        raise ValueError("ortho_loss: empty batch")
    out, target, lam = _perturb(net, spec, batch_f, rng, lambda_kind)
    c = ad.vsum(ad.mul(out, target), axis=1)
    return ad.vmean(ad.mul(ad.square(c), lam))


def obtuse_loss(net: ScoreNet, spec: SdeSpec, batch_f: np.ndarray, rng: Rng,
                lambda_kind: str = "kernel_var", hinge: bool = False) -> Node:
    """Raw dot product between model score and forget kernel score.

    Unbounded below by design; the hinge variant max(0, c) is off by default.
    """
    if batch_f.shape[0] == 0:
        raise ValueError("obtuse_loss: empty batch")
    out, target, lam = _perturb(net, spec, batch_f, rng, lambda_kind)
    c = ad.vsum(ad.mul(out, target), axis=1)
    if hinge:
        c = ad.relu(c)
    return ad.vmean(ad.mul(c, lam))


def _draw_batch(pool: np.ndarray, rng: Rng, batch_size: int) -> np.ndarray:
    idx = rng.integers(0, pool.shape[0], batch_size)
    return pool[idx]


def _forget_loss(net, spec, plan, batch, rng):
    if plan.mode in ("ort", "finetune_ort"):
        return ortho_loss(net, spec, batch, rng, plan.lambda_kind)
    return obtuse_loss(net, spec, batch, rng, plan.lambda_kind, plan.obtuse_hinge)


def msgm_step(net: ScoreNet, spec: SdeSpec, plan: TrainPlan, data: SplitDataset,
              step_index: int, rng_g: Rng, rng_f: Rng, opt: Adam):
    """One optimizer update of the combined objective.

    Retain loss every step; forget loss on steps where
    step_index % update_interval == 0 (skipped entirely when alpha == 1).
    The applied gradient is formed as alpha * g_g + (1 - alpha) * g_f from
    two separate backward passes, so the linear combination is exact.
    Returns (loss_g, loss_f_or_None, applied_total).
    """
    if plan.mode not in MSGM_MODES:
        raise ValueError(f"msgm_step requires an msgm mode, got {plan.mode!r}")
    batch_g = _draw_batch(data.retain, rng_g, plan.batch_size)
    lg_node = dsm_loss(net, spec, batch_g, rng_g, plan.lambda_kind)
    lg = float(lg_node.value)
    grad = backward(net.tape, lg_node).copy()
    lf = None
    total = lg
    if plan.alpha < 1.0 and step_index % plan.update_interval == 0:
        batch_f = _draw_batch(data.forget, rng_f, plan.batch_size)
        lf_node = _forget_loss(net, spec, plan, batch_f, rng_f)
        lf = float(lf_node.value)
        g_f = backward(net.tape, lf_node)
        grad = plan.alpha * grad + (1.0 - plan.alpha) * g_f
        total = plan.alpha * lg + (1.0 - plan.alpha) * lf
    if not np.isfinite(total) or abs(total) > plan.loss_guard:
        raise TrainingDiverged(step_index, total)
    opt.step(net.tape.values, grad)
    return lg, lf, total


def dsm_step(net: ScoreNet, spec: SdeSpec, plan: TrainPlan, pool: np.ndarray,
             step_index: int, rng_g: Rng, opt: Adam):
    """One plain score-matching update (standard / unseen modes)."""
    batch = _draw_batch(pool, rng_g, plan.batch_size)
    lg_node = dsm_loss(net, spec, batch, rng_g, plan.lambda_kind)
    lg = float(lg_node.value)
    if not np.isfinite(lg) or abs(lg) > plan.loss_guard:
        raise TrainingDiverged(step_index, lg)
    grad = backward(net.tape, lg_node)
    opt.step(net.tape.values, grad)
    return lg, None, lg


def train(plan: TrainPlan, data: SplitDataset, spec: SdeSpec,
          net: ScoreNet, progress=None) -> tuple[ScoreNet, LossCurve]:
    """Run plan.steps optimizer steps on `net`; deterministic given plan.seed.

    `net` is either a fresh init or a loaded checkpoint (fine-tune modes).
    """
    if data.retain.shape[0] == 0:
        raise ValueError("train: retain split is empty")
    if plan.mode in MSGM_MODES and data.forget.shape[0] == 0:
        raise ValueError(f"train: mode {plan.mode!r} needs a non-empty forget split")
    root = Rng(plan.seed)
    rng_g, rng_f = root.child(0), root.child(1)
    opt = Adam.from_plan(net.tape.size, plan)
    curve = LossCurve()
    pool = data.pooled if plan.mode == "standard" else data.retain
    for step in range(plan.steps):
        if plan.mode in MSGM_MODES:
            lg, lf, total = msgm_step(net, spec, plan, data, step, rng_g, rng_f, opt)
        else:
            lg, lf, total = dsm_step(net, spec, plan, pool, step, rng_g, opt)
        curve.append(step, lg, lf, total)
        if progress is not None and step % 1000 == 0:
            progress(step, total)
    return net, curve


def finetune_plan(plan: TrainPlan, steps: int = 10_000) -> TrainPlan:
    """Derive a fine-tuning plan (same objective, fewer steps) from `plan`."""
    mode = plan.mode if plan.mode.startswith("finetune") else f"finetune_{plan.mode}"
    return replace(plan, mode=mode, steps=steps)
