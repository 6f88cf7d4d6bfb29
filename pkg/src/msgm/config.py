"""Experiment configuration: INI-style files with full-field validation.

A config file has key = value sections ([experiment], [mixture], [sde],
[net], [data], [train], [sample], [likelihood], [field], [inpaint],
[reconstruct]). Parsing collects every problem before failing, so one run
reports all offending fields at once.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mixture import MixtureSpec
from .sde import SdeSpec
from .training import LAMBDA_KINDS, MODES, TrainPlan

_REQUIRED = object()


@dataclass(frozen=True)
class NetConfig:
    hidden: tuple = (128, 128)
    time_freqs: int = 64


@dataclass(frozen=True)
class DataConfig:
    n_train: int = 60_000
    n_test: int = 4_000


@dataclass(frozen=True)
class SampleConfig:
    n: int = 10_000
    n_steps: int = 1_000
    method: str = "em"  # or "pc"
    snr: float = 0.16
    corrector_steps: int = 1


@dataclass(frozen=True)
class LikelihoodConfig:
    rtol: float = 1e-5
    atol: float = 1e-5
    divergence: str = "exact"
    hutchinson_probes: int = 64
    n_eval: int = 500


@dataclass(frozen=True)
class FieldConfig:
    t: float = 0.08
    rect: tuple = (-5.0, 5.0, -5.0, 5.0)
    resolution: int = 25


@dataclass(frozen=True)
class InpaintConfig:
    observed: tuple = (0.0, 0.0)
    mask: tuple = (True, False)
    n: int = 2_000
    n_steps: int = 1_000


@dataclass(frozen=True)
class ReconstructConfig:
    t_star: float = 0.02
    n_points: int = 500
    n_steps: int = 100


@dataclass
class ExperimentConfig:
    seed: int
    out_dir: str
    mixture: MixtureSpec
    sde: SdeSpec
    net: NetConfig
    data: DataConfig
    train: TrainPlan
    sample: SampleConfig
    likelihood: LikelihoodConfig
    field_cfg: FieldConfig = field(default_factory=FieldConfig)
    inpaint: InpaintConfig = field(default_factory=InpaintConfig)
    reconstruct: ReconstructConfig = field(default_factory=ReconstructConfig)


def _tokens(raw: str) -> list[str]:
    return raw.replace(",", " ").split()


class _Reader:
    """Typed accessor over one parsed INI file, accumulating problems."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.problems: list[str] = []

    def get(self, section, key, cast, default=_REQUIRED):
        raw = self.parser.get(section, key, fallback=None)
        if raw is None:
            if default is _REQUIRED:
                self.problems.append(f"[{section}] {key}: missing")
                return None
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            self.problems.append(f"[{section}] {key}: {exc}")
            return None

    def fail(self, section, key, msg):
        self.problems.append(f"[{section}] {key}: {msg}")


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _floats(raw: str) -> tuple:
    return tuple(float(v) for v in _tokens(raw))


def _ints(raw: str) -> tuple:
    return tuple(int(v) for v in _tokens(raw))


def _bools(raw: str) -> tuple:
    return tuple(_bool(v) for v in _tokens(raw))


def _means(raw: str) -> np.ndarray:
    rows = [r.strip() for r in raw.split(";") if r.strip()]
    return np.asarray([[float(v) for v in _tokens(r)] for r in rows])


def _mixture(r: _Reader) -> MixtureSpec | None:
    weights = r.get("mixture", "weights", _floats, (0.4, 0.2, 0.4))
    means = r.get("mixture", "means", _means, np.array([[-2.0, -2.0], [0.0, 0.0], [2.0, 2.0]]))
    nsfg = r.get("mixture", "nsfg", _bools, (False, True, False))
    if weights is None or means is None or nsfg is None:
        return None
    k = len(weights)
    variances = r.get("mixture", "variances", _floats, tuple([1.0] * k))
    if variances is None:
        return None
    if means.shape[0] != k:
        r.fail("mixture", "means", f"expected {k} rows, got {means.shape[0]}")
        return None
    if len(nsfg) != k:
        r.fail("mixture", "nsfg", f"expected {k} flags, got {len(nsfg)}")
        return None
    if len(variances) != k:
        r.fail("mixture", "variances", f"expected {k} values, got {len(variances)}")
        return None
    d = means.shape[1]
    covs = np.stack([v * np.eye(d) for v in variances])
    try:
        return MixtureSpec(weights=np.asarray(weights), means=means, covs=covs,
                           nsfg=np.asarray(nsfg))
    except (ValueError, np.linalg.LinAlgError) as exc:
        r.fail("mixture", "weights/variances", str(exc))
        return None


def _sde(r: _Reader) -> SdeSpec | None:
    kind = r.get("sde", "kind", str, "ve")
    if kind is not None:
        kind = kind.strip().lower()
    horizon = r.get("sde", "horizon", float, 1.0)
    t_eps = r.get("sde", "t_eps", float, 1e-3)
    kw = dict(kind=kind, horizon=horizon, t_eps=t_eps)
    if kind == "ve":
        # noise bounds are experiment-defining; require them explicitly
        kw["sigma_min"] = r.get("sde", "sigma_min", float)
        kw["sigma_max"] = r.get("sde", "sigma_max", float)
    elif kind == "vp":
        kw["beta_min"] = r.get("sde", "beta_min", float)
        kw["beta_max"] = r.get("sde", "beta_max", float)
    else:
        r.fail("sde", "kind", f"must be 've' or 'vp', got {kind!r}")
        return None
    if any(v is None for v in kw.values()):
        return None
    try:
        return SdeSpec(**kw)
    except ValueError as exc:
        r.fail("sde", "kind", str(exc))
        return None


def _train(r: _Reader, seed: int) -> TrainPlan | None:
    mode = r.get("train", "mode", str, "standard")
    if mode is not None:
        mode = mode.strip().lower()
        if mode not in MODES:
            r.fail("train", "mode", f"must be one of {MODES}, got {mode!r}")
            mode = None
    lam = r.get("train", "lambda_kind", str, "kernel_var")
    if lam is not None and lam not in LAMBDA_KINDS:
        r.fail("train", "lambda_kind", f"must be one of {LAMBDA_KINDS}")
        lam = None
    kw = dict(
        mode=mode,
        alpha=r.get("train", "alpha", float, 0.99),
        update_interval=r.get("train", "update_interval", int, 4),
        steps=r.get("train", "steps", int, 50_000),
        batch_size=r.get("train", "batch_size", int, 512),
        learning_rate=r.get("train", "learning_rate", float, 2e-4),
        adam_beta1=r.get("train", "adam_beta1", float, 0.9),
        adam_beta2=r.get("train", "adam_beta2", float, 0.999),
        adam_eps=r.get("train", "adam_eps", float, 1e-8),
        lambda_kind=lam,
        seed=r.get("train", "seed", int, seed),
        obtuse_hinge=r.get("train", "obtuse_hinge", _bool, False),
    )
    if any(v is None for v in kw.values()):
        return None
    try:
        return TrainPlan(**kw)
    except ValueError as exc:
        r.fail("train", "plan", str(exc))
        return None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate one experiment config file.

    `overrides` may carry seed / mode / out_dir values from the command line;
    they are applied before validation.
    """
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError([f"config file not found or unreadable: {path}"])
    overrides = overrides or {}
    r = _Reader(parser)

    seed = r.get("experiment", "seed", int, 0)
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
    out_dir = r.get("experiment", "out_dir", str, "out")
    if overrides.get("out_dir") is not None:
        out_dir = str(overrides["out_dir"])
    if overrides.get("mode") is not None:
        if not parser.has_section("train"):
            parser.add_section("train")
        parser.set("train", "mode", str(overrides["mode"]))

    mixture = _mixture(r)
    sde = _sde(r)
    net = None
    hidden = r.get("net", "hidden", _ints, (128, 128))
    time_freqs = r.get("net", "time_freqs", int, 64)
    if hidden is not None and time_freqs is not None:
        if len(hidden) == 0 or any(h < 1 for h in hidden):
            r.fail("net", "hidden", "need at least one positive width")
        elif time_freqs < 1:
            r.fail("net", "time_freqs", "must be >= 1")
        else:
            net = NetConfig(hidden=hidden, time_freqs=time_freqs)
    data = None
    n_train = r.get("data", "n_train", int, 60_000)
    n_test = r.get("data", "n_test", int, 4_000)
    if n_train is not None and n_test is not None:
        if n_train < 1 or n_test < 1:
            r.fail("data", "n_train/n_test", "must be positive")
        else:
            data = DataConfig(n_train=n_train, n_test=n_test)
    train = _train(r, seed if seed is not None else 0)

    method = r.get("sample", "method", str, "em")
    if method is not None:
        method = method.strip().lower()
        if method not in ("em", "pc"):
            r.fail("sample", "method", f"must be 'em' or 'pc', got {method!r}")
            method = None
    sample = None
    kw = dict(
        n=r.get("sample", "n", int, 10_000),
        n_steps=r.get("sample", "n_steps", int, 1_000),
        method=method,
        snr=r.get("sample", "snr", float, 0.16),
        corrector_steps=r.get("sample", "corrector_steps", int, 1),
    )
    if all(v is not None for v in kw.values()):
        sample = SampleConfig(**kw)

    div = r.get("likelihood", "divergence", str, "exact")
    if div is not None and div not in ("exact", "hutchinson"):
        r.fail("likelihood", "divergence", "must be 'exact' or 'hutchinson'")
        div = None
    likelihood = None
    kw = dict(
        rtol=r.get("likelihood", "rtol", float, 1e-5),
        atol=r.get("likelihood", "atol", float, 1e-5),
        divergence=div,
        hutchinson_probes=r.get("likelihood", "hutchinson_probes", int, 64),
        n_eval=r.get("likelihood", "n_eval", int, 500),
    )
    if all(v is not None for v in kw.values()):
        likelihood = LikelihoodConfig(**kw)

    field_cfg = None
    kw = dict(
        t=r.get("field", "t", float, 0.08),
        rect=r.get("field", "rect", _floats, (-5.0, 5.0, -5.0, 5.0)),
        resolution=r.get("field", "resolution", int, 25),
    )
    if all(v is not None for v in kw.values()):
        if len(kw["rect"]) != 4:
            r.fail("field", "rect", "expected 4 numbers: x0 x1 y0 y1")
        else:
            field_cfg = FieldConfig(**kw)

    inpaint = None
    kw = dict(
        observed=r.get("inpaint", "observed", _floats, (0.0, 0.0)),
        mask=r.get("inpaint", "mask", _bools, (True, False)),
        n=r.get("inpaint", "n", int, 2_000),
        n_steps=r.get("inpaint", "n_steps", int, 1_000),
    )
    if all(v is not None for v in kw.values()):
        if len(kw["observed"]) != len(kw["mask"]):
            r.fail("inpaint", "observed/mask", "lengths differ")
        else:
            inpaint = InpaintConfig(**kw)

    reconstruct = None
    kw = dict(
        t_star=r.get("reconstruct", "t_star", float, 0.02),
        n_points=r.get("reconstruct", "n_points", int, 500),
        n_steps=r.get("reconstruct", "n_steps", int, 100),
    )
    if all(v is not None for v in kw.values()):
        reconstruct = ReconstructConfig(**kw)

    # cross-field checks once the pieces exist
    if mixture is not None and sde is not None and reconstruct is not None:
        if not (sde.t_eps <= reconstruct.t_star <= sde.horizon):
            r.fail("reconstruct", "t_star", f"outside [{sde.t_eps}, {sde.horizon}]")
    if mixture is not None and inpaint is not None:
        if len(inpaint.mask) != mixture.dim:
            r.fail("inpaint", "mask", f"length must equal mixture dim {mixture.dim}")

    if r.problems:
        raise ConfigError(r.problems)
    return ExperimentConfig(seed=seed, out_dir=out_dir, mixture=mixture, sde=sde,
                            net=net, data=data, train=train, sample=sample,
                            likelihood=likelihood, field_cfg=field_cfg,
                            inpaint=inpaint, reconstruct=reconstruct)
