"""Time-conditioned MLP score model and its input-divergence evaluator.

The raw network maps [x, time features] through SiLU hidden layers; its
output is divided by the kernel std of the attached diffusion so the model
predicts (noise / std), keeping target magnitudes O(1) across the schedule.
Input derivatives (needed for the likelihood divergence term) are taken by
central-difference probing rather than through the parameter tape.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from . import autodiff as ad
from . import sde as sde_mod
from .autodiff import Node, Tape
from .errors import CheckpointError, NumericalError
from .rng import Rng
from .sde import SdeSpec

CHECKPOINT_MAGIC = b"MSGM1"


def time_features(t, freqs: np.ndarray) -> np.ndarray:
    """Sinusoidal features [sin(w t), cos(w t)] for each frequency w."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    phase = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class ScoreNet:
    """MLP s(x, t) with output dimension equal to the input dimension."""

    def __init__(self, seed: int, input_dim: int, widths=(128, 128),
                 time_freqs: int = 64, sde: SdeSpec | None = None):
        if len(widths) == 0:
            raise ValueError("ScoreNet: widths must be non-empty")
        self.input_dim = int(input_dim)
        self.widths = tuple(int(w) for w in widths)
        self.time_freqs = int(time_freqs)
        self.sde = sde if sde is not None else SdeSpec()
        self.seed = int(seed)
        # geometric frequency ladder covering slow and fast variation of t
        self.freqs = 2.0 * np.pi * np.exp(
            np.linspace(np.log(0.5), np.log(500.0), self.time_freqs)
        )
        embed = 2 * self.time_freqs
        dims = [self.input_dim + embed, *self.widths, self.input_dim]
        # spawn paths >= 1000 keep init streams clear of the training streams
        rng = Rng(self.seed)
        inits = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = rng.child(1000 + i).normal((fan_in, fan_out)) / np.sqrt(fan_in)
            inits.append(w)
            inits.append(np.zeros(fan_out))
        self.tape = Tape(inits)
        self.n_layers = len(dims) - 1

    @property
    def n_params(self) -> int:
        return self.tape.size

    def _weight_views(self):
        return [(self.tape.view(2 * i), self.tape.view(2 * i + 1)) for i in range(self.n_layers)]

    def _inputs(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t_arr < self.sde.t_eps - 1e-12) or np.any(t_arr > self.sde.horizon + 1e-12):
            raise ValueError(f"ScoreNet: t outside [{self.sde.t_eps}, {self.sde.horizon}]")
        if t_arr.size == 1 and x.shape[0] > 1:
            t_arr = np.full(x.shape[0], float(t_arr[0]))
        feats = time_features(t_arr, self.freqs)
        inv_std = 1.0 / np.asarray(sde_mod.marginal_std(self.sde, t_arr))
        return np.concatenate([x, feats], axis=1), inv_std

    def forward(self, x, t) -> np.ndarray:
        """Inference path; pure numpy, no gradient recording."""
        squeeze = np.asarray(x).ndim == 1
        h, inv_std = self._inputs(x, t)
        for i, (w, b) in enumerate(self._weight_views()):
            h = h @ w + b
            if i < self.n_layers - 1:
                h = h * (1.0 / (1.0 + np.exp(-h)))  # silu
        out = h * inv_std[:, None]
        if not np.isfinite(out).all():
            raise NumericalError("ScoreNet.forward produced non-finite output")
        return out[0] if squeeze else out

    __call__ = forward

    def forward_nodes(self, x, t) -> Node:
        """Training path; mirrors forward() op for op on the tape."""
        h_val, inv_std = self._inputs(x, t)
        h = ad.as_node(h_val)
        for i in range(self.n_layers):
            w = self.tape.leaf(2 * i)
            b = self.tape.leaf(2 * i + 1)
            h = ad.add(ad.matmul(h, w), b)
            if i < self.n_layers - 1:
                h = ad.silu(h)
        out = ad.mul(h, inv_std[:, None])
        if not np.isfinite(out.value).all():
            raise NumericalError("ScoreNet.forward_nodes produced non-finite output")
        return out

    def divergence(self, x, t, mode: str = "exact", h_scale: float = 1e-4,
                   probes: int = 64, rng: Rng | None = None):
        return divergence(self, x, t, mode=mode, h_scale=h_scale, probes=probes, rng=rng)

    # -- checkpoint io -----------------------------------------------------

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(checkpoint_bytes(self))

    @classmethod
    def load(cls, path, sde: SdeSpec | None = None) -> "ScoreNet":
        with open(path, "rb") as fh:
            blob = fh.read()
        d, widths, n_freqs, theta = parse_checkpoint(blob)
        net = cls(seed=0, input_dim=d, widths=widths, time_freqs=n_freqs, sde=sde)
        if theta.size != net.n_params:
            raise CheckpointError(
                f"checkpoint holds {theta.size} parameters, architecture needs {net.n_params}"
            )
        net.tape.values[:] = theta
        return net


def checkpoint_bytes(net: ScoreNet) -> bytes:
    """Little-endian binary: magic, architecture header, float64 theta, CRC."""
    head = bytearray()
    head += CHECKPOINT_MAGIC
    head += struct.pack("<II", net.input_dim, len(net.widths))
    head += struct.pack(f"<{len(net.widths)}I", *net.widths)
    head += struct.pack("<IQ", net.time_freqs, net.n_params)
    body = np.ascontiguousarray(net.tape.values, dtype="<f8").tobytes()
    payload = bytes(head) + body
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    return payload + struct.pack("<Q", crc)


def parse_checkpoint(blob: bytes):
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 or blob[:5] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a score-net checkpoint (bad magic)")
    payload, (crc,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    off = 5
    d, n_widths = struct.unpack_from("<II", payload, off)
    off += 8
    widths = struct.unpack_from(f"<{n_widths}I", payload, off)
    off += 4 * n_widths
    n_freqs, n_params = struct.unpack_from("<IQ", payload, off)
    off += 12
    theta = np.frombuffer(payload, dtype="<f8", count=n_params, offset=off).copy()
    return d, widths, n_freqs, theta


def divergence(score_fn, x, t, mode: str = "exact", h_scale: float = 1e-4,
               probes: int = 64, rng: Rng | None = None):
    """Divergence of a vector field s(x, t) w.r.t. x, per input row.

    exact: d central-difference probes along coordinate axes with step
    h = h_scale * (1 + |x|_inf) per row. hutchinson: averages v^T J v over
    Rademacher probes v, each estimated by one central difference along v.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, d = x.shape
    h = h_scale * (1.0 + np.abs(x).max(axis=1))  # (n,)
    if mode == "exact":
        acc = np.zeros(n)
        for j in range(d):
            e = np.zeros_like(x)
            e[:, j] = h
            acc += (score_fn(x + e, t)[:, j] - score_fn(x - e, t)[:, j]) / (2.0 * h)
        return acc
    if mode == "hutchinson":
        if rng is None:
            rng = Rng(0)
        acc = np.zeros(n)
        for _ in range(probes):
            v = rng.rademacher((n, d))
            dv = v * h[:, None]
            jvp = (score_fn(x + dv, t) - score_fn(x - dv, t)) / (2.0 * h[:, None])
            acc += (v * jvp).sum(axis=1)
        return acc / probes
    raise ValueError(f"unknown divergence mode {mode!r}")
