"""Forward-diffusion noise schedule and corruption.

Conventions: arrays are indexed by timestep t in [0, T] with ``beta[0] = 0``
and ``alpha_bar[0] = 1``, so t = 0 is the clean-data endpoint and formulas
like sqrt(alpha_bar[t_prev]) work for the final step without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ftg.errors import ScheduleError
from ftg.rngs import make_rng

SIGMA_MODES = ("posterior", "paper")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step corruption variances plus the backward noise-scale rule.

    ``sigma_mode`` picks the stochastic-step scale: "posterior" uses the
    forward-posterior standard deviation
    sqrt((1-abar_prev)/(1-abar_t)) * sqrt(1 - abar_t/abar_prev), valid for any
    step pair; "paper" uses sqrt(beta[t-1]/beta[t]) * sqrt(1 - abar_t/abar_prev)
    (algebraically sqrt(beta[t-1])) and is defined for consecutive steps only,
    so non-consecutive pairs fall back to the posterior rule. ``eta`` scales
    either choice linearly; 0 gives a deterministic update.
    """

    beta: np.ndarray
    eta: float = 1.0
    sigma_mode: str = "posterior"
    alpha_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.shape[0] < 2:
            raise ScheduleError("beta must be 1-d with at least one step after beta[0]")
        if beta[0] != 0.0:
            raise ScheduleError("beta[0] must be 0 (clean-data endpoint)")
        if not np.isfinite(beta).all() or (beta[1:] <= 0).any() or (beta[1:] >= 1).any():
            raise ScheduleError("beta[1:] must lie in (0, 1)")
        if not 0.0 <= self.eta <= 1.0:
            raise ScheduleError(f"eta must be in [0, 1], got {self.eta}")
        if self.sigma_mode not in SIGMA_MODES:
            raise ScheduleError(f"sigma_mode must be one of {SIGMA_MODES}")
        alpha_bar = np.cumprod(1.0 - beta)
        for arr in (beta, alpha_bar):
            arr.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return self.beta.shape[0] - 1

    def check_t(self, t: int, lowest: int = 1) -> int:
        t = int(t)
        if not lowest <= t <= self.T:
            raise ScheduleError(f"t={t} outside [{lowest}, {self.T}]")
        return t

    def sigma_between(self, t_prev: int, t: int, eta: Optional[float] = None) -> float:
        """Backward noise scale for the jump t -> t_prev (0 <= t_prev < t <= T)."""
        t = self.check_t(t)
        t_prev = int(t_prev)
        if not 0 <= t_prev < t:
            raise ScheduleError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
        eta = self.eta if eta is None else float(eta)
        ab_t, ab_prev = self.alpha_bar[t], self.alpha_bar[t_prev]
        step_var = 1.0 - ab_t / ab_prev
        if self.sigma_mode == "paper" and t_prev == t - 1:
            base = np.sqrt(self.beta[t - 1] / self.beta[t]) if t >= 2 else 0.0
        else:
            base = np.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        return float(eta * base * np.sqrt(step_var))


def linear_schedule(T: int = 1000, beta_first: float = 8.5e-4,
                    beta_last: float = 1.2e-2, eta: float = 1.0,
                    sigma_mode: str = "posterior") -> NoiseSchedule:
    """Linearly interpolated beta over t = 1..T, prepended with beta[0] = 0."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_first <= beta_last < 1.0:
        raise ScheduleError(
            f"need 0 < beta_first <= beta_last < 1, got ({beta_first}, {beta_last})")
    beta = np.concatenate(([0.0], np.linspace(beta_first, beta_last, T)))
    return NoiseSchedule(beta, eta=eta, sigma_mode=sigma_mode)


def forward_noise(x0: np.ndarray, t, sched: NoiseSchedule,
                  eps: Optional[np.ndarray] = None, rng=None, seed=None):
    """Corrupt clean data to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    ``t`` may be a scalar or, for batched ``x0``, one step per leading-axis
    element. Returns (x_t, eps); eps is drawn standard normal when not given.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if eps is None:
        if rng is None:
            rng = make_rng(0 if seed is None else seed)
        eps = rng.standard_normal(x0.shape)
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != x0.shape:
            raise ScheduleError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    t_arr = np.asarray(t)
    if t_arr.ndim == 0:
        ab = sched.alpha_bar[sched.check_t(int(t_arr))]
    else:
        if t_arr.shape != (x0.shape[0],):
            raise ScheduleError("per-sample t must have one entry per batch element")
        for ti in t_arr:
            sched.check_t(int(ti))
        ab = sched.alpha_bar[t_arr].reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps


def uniform_timesteps(T: int, steps: int = 10) -> np.ndarray:
    """Evenly spaced step subsequence from 1 to T inclusive (ascending)."""
    if not 1 <= steps <= T:
        raise ScheduleError(f"steps must be in [1, T={T}], got {steps}")
    tau = np.unique(np.rint(np.linspace(1, T, steps)).astype(np.int64))
    return tau
