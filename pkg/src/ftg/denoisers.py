"""Denoiser interface and the two concrete denoisers.

ToyDenoiser is a small three-layer convnet with a sinusoidal timestep
embedding, sized for CPU training; forward and backward run through the
kernel backend. GaussianOracleDenoiser returns the exact noise prediction
for per-cell Gaussian data, which makes sampler verification analytic.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from ftg import kernels
from ftg.errors import InvalidInputError
from ftg.pianoroll import CHANNELS, LatentRoll, ModelInput, MODEL_CHANNELS
from ftg.rngs import make_rng
from ftg.schedule import NoiseSchedule


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


class Denoiser(ABC):
    """Noise predictor: maps (model input, timestep) to predicted noise."""

    supports_conditions: bool = False
    supports_melody: bool = False

    @abstractmethod
    def predict_batch(self, x: np.ndarray, t) -> np.ndarray:
        """x (B, 6, L, P), t scalar or (B,) -> predicted noise (B, 2, L, P)."""

    def predict(self, model_input: ModelInput, t: int) -> LatentRoll:
        out = self.predict_batch(model_input.data[None], int(t))[0]
        return LatentRoll(np.asarray(out, dtype=np.float64))


def sinusoidal_embedding(t, dim: int, dtype=np.float64) -> np.ndarray:
    """(B, dim) standard sin/cos features of the raw timestep index."""
    if dim % 2 != 0:
        raise InvalidInputError(f"embedding dimension must be even, got {dim}")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


class ToyDenoiser(Denoiser):
    """conv(6->width) + timestep bias, SiLU, conv(width->width), SiLU,
    conv(width->2). Parameters are float32 by default; pass float64 for
    gradient checking."""

    supports_conditions = True
    supports_melody = True

    def __init__(self, width: int = 16, temb_dim: int = 32, seed: int = 0,
                 dtype=np.float32):
        if width < 1 or temb_dim < 2:
            raise InvalidInputError("width >= 1 and temb_dim >= 2 required")
        self.width = int(width)
        self.temb_dim = int(temb_dim)
        self.dtype = np.dtype(dtype)
        rng = make_rng(seed)

        def conv_init(cout, cin):
            scale = np.sqrt(2.0 / (cin * 9))
            return (rng.standard_normal((cout, cin, 3, 3)) * scale).astype(self.dtype)

        w = self.width
        self.params: dict[str, np.ndarray] = {
            "w1": conv_init(w, MODEL_CHANNELS),
            "b1": np.zeros(w, dtype=self.dtype),
            "wt": (rng.standard_normal((w, self.temb_dim))
                   * np.sqrt(1.0 / self.temb_dim)).astype(self.dtype),
            "bt": np.zeros(w, dtype=self.dtype),
            "w2": conv_init(w, w),
            "b2": np.zeros(w, dtype=self.dtype),
            "w3": conv_init(CHANNELS, w),
            "b3": np.zeros(CHANNELS, dtype=self.dtype),
        }

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _check_finite(self):
        for name, p in self.params.items():
            if not np.isfinite(p).all():
                raise InvalidInputError(f"non-finite parameter tensor {name!r}")

    def forward(self, x: np.ndarray, t) -> tuple[np.ndarray, dict]:
        """x (B, 6, L, P) -> (prediction (B, 2, L, P), cache for backward)."""
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != MODEL_CHANNELS:
            raise InvalidInputError(f"model input must be (B, 6, L, P), got {x.shape}")
        p = self.params
        emb = sinusoidal_embedding(np.broadcast_to(np.asarray(t), (x.shape[0],)),
                                   self.temb_dim, self.dtype)
        tb = emb @ p["wt"].T + p["bt"]                       # (B, width)
        h1 = kernels.conv3x3_forward(x, p["w1"], p["b1"]) + tb[:, :, None, None]
        a1 = _silu(h1)
        h2 = kernels.conv3x3_forward(a1, p["w2"], p["b2"])
        a2 = _silu(h2)
        y = kernels.conv3x3_forward(a2, p["w3"], p["b3"])
        return y, {"x": x, "emb": emb, "h1": h1, "a1": a1, "h2": h2, "a2": a2}

    def backward(self, cache: dict, gy: np.ndarray) -> dict[str, np.ndarray]:
        """Gradient of a scalar loss wrt every parameter, given dLoss/dy."""
        p = self.params
        gy = np.ascontiguousarray(gy, dtype=self.dtype)
        ga2, gw3, gb3 = kernels.conv3x3_backward(cache["a2"], p["w3"], gy)
        gh2 = ga2 * _silu_grad(cache["h2"])
        ga1, gw2, gb2 = kernels.conv3x3_backward(cache["a1"], p["w2"], gh2)
        gh1 = ga1 * _silu_grad(cache["h1"])
        gtb = gh1.sum(axis=(2, 3))                           # (B, width)
        _, gw1, gb1 = kernels.conv3x3_backward(cache["x"], p["w1"], gh1)
        return {"w1": gw1, "b1": gb1,
                "wt": gtb.T @ cache["emb"], "bt": gtb.sum(axis=0),
                "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}

    def predict_batch(self, x: np.ndarray, t) -> np.ndarray:
        return self.forward(x, t)[0]


def oracle_epsilon(x_t: np.ndarray, t, sched: NoiseSchedule, mu, v) -> np.ndarray:
    """Exact noise prediction when clean data is per-cell normal N(mu, v):
    (x_t - sqrt(abar_t) * mu) * sqrt(1 - abar_t) / (abar_t * v + 1 - abar_t)."""
    v = np.asarray(v, dtype=np.float64)
    if (v <= 0).any():
        raise InvalidInputError("oracle variance must be > 0")
    x_t = np.asarray(x_t, dtype=np.float64)
    t_arr = np.asarray(t)
    if t_arr.ndim == 0:
        ab = sched.alpha_bar[sched.check_t(int(t_arr))]
    else:
        for ti in t_arr:
            sched.check_t(int(ti))
        ab = sched.alpha_bar[t_arr].reshape((-1,) + (1,) * (x_t.ndim - 1))
    return (x_t - np.sqrt(ab) * np.asarray(mu)) * np.sqrt(1.0 - ab) / (ab * v + 1.0 - ab)


class GaussianOracleDenoiser(Denoiser):
    """Analytic denoiser for N(mu, v) data; ignores condition channels."""

    supports_conditions = False
    supports_melody = False

    def __init__(self, mu, v, sched: NoiseSchedule):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        if (self.v <= 0).any():
            raise InvalidInputError("oracle variance must be > 0")
        self.sched = sched

    def predict_batch(self, x: np.ndarray, t) -> np.ndarray:
        latent = np.asarray(x, dtype=np.float64)[:, :CHANNELS]
        return oracle_epsilon(latent, t, self.sched, self.mu, self.v)
