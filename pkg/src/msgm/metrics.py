"""Unlearning ratio, score-field grids and field-alignment statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mixture import MixtureSpec, analytic_score_fn, nsfg_posterior
from .sampling import SampleBatch
from .sde import SdeSpec


def unlearning_ratio(mix: MixtureSpec, samples, threshold: float = 0.5) -> float:
    """Fraction of samples whose posterior mass on flagged components
    exceeds `threshold` (argmax assignment when threshold is 0.5 and
    components are well separated)."""
    pts = samples.points if isinstance(samples, SampleBatch) else np.atleast_2d(samples)
    if pts.shape[0] == 0:
        raise ValueError("unlearning_ratio: empty sample batch")
    return float((nsfg_posterior(mix, pts) > threshold).mean())


@dataclass
class ScoreField:
    """Vectors of a score function on a regular 2D lattice at one time."""

    xs: np.ndarray
    ys: np.ndarray
    t: float
    vectors: np.ndarray  # (len(ys), len(xs), d)

    def points(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def flat_vectors(self) -> np.ndarray:
        return self.vectors.reshape(-1, self.vectors.shape[-1])

    def to_csv(self, path):
        pts, vec = self.points(), self.flat_vectors()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "u", "v"])
            for (x, y), (u, v) in zip(pts, vec):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(u)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, t: float = float("nan")) -> "ScoreField":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append([float(row[k]) for k in ("x", "y", "u", "v")])
        arr = np.asarray(rows)
        xs = np.unique(arr[:, 0])
        ys = np.unique(arr[:, 1])
        vec = arr[:, 2:].reshape(ys.size, xs.size, 2)
        return cls(xs=xs, ys=ys, t=t, vectors=vec)


def score_field(model, t: float, rect=(-5.0, 5.0, -5.0, 5.0), resolution: int = 25,
                sde: SdeSpec | None = None) -> ScoreField:
    """Evaluate a score model on a lattice over `rect` at time t.

    `model` is a callable s(x, t); a MixtureSpec is accepted too, in which
    case `sde` must be given and the exact diffused-mixture score is used.
    """
    if resolution < 2:
        raise ValueError("score_field: resolution must be >= 2 per axis")
    if isinstance(model, MixtureSpec):
        if sde is None:
            raise ValueError("score_field: analytic field needs the sde spec")
        fn = analytic_score_fn(model, sde)
    else:
        fn = model
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vec = np.asarray(fn(pts, t))
    if not np.isfinite(vec).all():
        raise ValueError("score_field: non-finite vectors")
    return ScoreField(xs=xs, ys=ys, t=float(t), vectors=vec.reshape(ys.size, xs.size, -1))


def disk(center, radius: float):
    """Predicate selecting lattice nodes inside a disk."""
    c = np.asarray(center, dtype=np.float64)

    def inside(pts: np.ndarray) -> np.ndarray:
        return ((pts - c) ** 2).sum(axis=1) <= radius * radius

    return inside


@dataclass
class AlignmentStats:
    mean_cosine: float
    frac_negative: float
    n_used: int
    n_zero: int


def field_alignment(a: ScoreField, b: ScoreField, region=None) -> AlignmentStats:
    """Cosine similarity between two fields on the same lattice.

    Nodes where either vector is exactly zero are excluded and counted.
    """
    if a.xs.shape != b.xs.shape or a.ys.shape != b.ys.shape or \
            not np.allclose(a.xs, b.xs) or not np.allclose(a.ys, b.ys) or a.t != b.t:
        raise ValueError("field_alignment: fields must share lattice and time")
    pts = a.points()
    va, vb = a.flat_vectors(), b.flat_vectors()
    keep = np.ones(pts.shape[0], dtype=bool) if region is None else region(pts)
    va, vb = va[keep], vb[keep]
    na = np.sqrt((va * va).sum(axis=1))
    nb = np.sqrt((vb * vb).sum(axis=1))
    ok = (na > 0) & (nb > 0)
    n_zero = int((~ok).sum())
    if not ok.any():
        return AlignmentStats(float("nan"), float("nan"), 0, n_zero)
    cos = (va[ok] * vb[ok]).sum(axis=1) / (na[ok] * nb[ok])
    return AlignmentStats(float(cos.mean()), float((cos < 0).mean()), int(ok.sum()), n_zero)
