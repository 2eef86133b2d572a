"""Classifier-free guidance and constraint-corrected sampling.

The corrections rewrite the predicted noise so that the implied clean-data
estimate (predicted X0) satisfies harmonic and rhythmic constraints with a
small margin kappa:

* harmonic: at out-of-key cells (both channels), clamp predicted X0 to
  <= 1/2 - kappa via an elementwise max on the noise prediction;
* rhythm (onset channel, per column): "none" clamps every candidate off;
  "at_least N" raises the largest below-threshold candidates to
  1/2 + kappa until N are on; "exactly N" selects the N cheapest cells by
  (on-cost - off-cost) and forces the rest off.

Each correction is an exact projection in predicted-X0 space: identity off
its target set, idempotent, and minimal among feasible moves. DDPM and DDIM
share one trajectory loop, so DDIM over the full step sequence with eta = 1
reproduces DDPM bit-for-bit; stochastic steps draw one standard normal each
(deterministic steps draw nothing).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ftg import kernels
from ftg.errors import (InfeasibleConstraintError, InvalidInputError,
                        LengthMismatchError, ScheduleError)
from ftg.denoisers import Denoiser
from ftg.pianoroll import (CHANNELS, ONSET, PITCHES, LatentRoll, PianoRoll,
                           build_condition_c, build_condition_cr)
from ftg.rngs import make_rng
from ftg.schedule import NoiseSchedule, uniform_timesteps
from ftg.theory import (ChordProgression, ColumnSpec, ConstraintMask,
                        KeySequence, KeySignature, R_AT_LEAST, R_EXACTLY,
                        RhythmPattern, build_constraint_mask,
                        derive_keys_from_chords, out_of_key_chord_columns)

DEFAULT_KAPPA = 1e-6


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs for guided sampling.

    ``w`` is the guidance weight; None resolves to 1.0 when a rhythm
    condition is supplied and 0.0 otherwise. ``harmonic``/``rhythm`` toggle
    the corrections. ``final_deterministic`` forces a noise-free final step
    whose output is exactly the corrected predicted X0.
    """

    w: Optional[float] = None
    harmonic: bool = True
    rhythm: bool = True
    kappa: float = DEFAULT_KAPPA
    final_deterministic: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidInputError(f"kappa must be > 0, got {self.kappa}")
        if self.w is not None and not np.isfinite(self.w):
            raise InvalidInputError("guidance weight must be finite")

    def resolve_w(self, has_rhythm: bool) -> float:
        if self.w is not None:
            return float(self.w)
        return 1.0 if has_rhythm else 0.0


@dataclass(frozen=True)
class SamplerPlan:
    """Sampling mode and step subsequence.

    DDPM walks every step T..1. DDIM walks ``timesteps`` (strictly
    increasing, within [1, T]; default: ``num_steps`` evenly spaced). ``eta``
    overrides the schedule's stochasticity knob when set.
    """

    mode: str = "ddpm"
    timesteps: Optional[Sequence[int]] = None
    num_steps: int = 10
    eta: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("ddpm", "ddim"):
            raise InvalidInputError(f"mode must be ddpm or ddim, got {self.mode!r}")
        if self.timesteps is not None:
            tau = tuple(int(t) for t in self.timesteps)
            if len(tau) == 0 or any(b <= a for a, b in zip(tau, tau[1:])):
                raise InvalidInputError("timesteps must be strictly increasing")
            object.__setattr__(self, "timesteps", tau)
        if self.num_steps < 1:
            raise InvalidInputError("num_steps must be >= 1")
        if self.eta is not None and not 0.0 <= self.eta <= 1.0:
            raise InvalidInputError(f"eta must be in [0, 1], got {self.eta}")

    def step_pairs(self, sched: NoiseSchedule) -> list[tuple[int, int]]:
        """Descending (t, t_prev) jumps ending at (.., 0)."""
        if self.mode == "ddpm":
            return [(t, t - 1) for t in range(sched.T, 0, -1)]
        if self.timesteps is None:
            tau = uniform_timesteps(sched.T, self.num_steps)
        else:
            tau = np.asarray(self.timesteps, dtype=np.int64)
            if tau[0] < 1 or tau[-1] > sched.T:
                raise ScheduleError(f"timesteps must lie within [1, {sched.T}]")
        pairs = [(int(tau[i]), int(tau[i - 1])) for i in range(len(tau) - 1, 0, -1)]
        pairs.append((int(tau[0]), 0))
        return pairs


def _as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, LatentRoll) else x
    return np.asarray(data, dtype=np.float64)


def cfg_combine(eps_c, eps_cr, w: float) -> np.ndarray:
    """Guided prediction eps_c + w * (eps_cr - eps_c)."""
    eps_c, eps_cr = _as_array(eps_c), _as_array(eps_cr)
    if eps_c.shape != eps_cr.shape:
        raise InvalidInputError(
            f"prediction shapes differ: {eps_c.shape} vs {eps_cr.shape}")
    return eps_c + w * (eps_cr - eps_c)


def predict_x0(x_t, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Clean-data estimate (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t)."""
    ab = sched.alpha_bar[sched.check_t(t)]
    if ab <= 0:
        raise ScheduleError(f"alpha_bar[{t}] = {ab} is not positive")
    return (_as_array(x_t) - np.sqrt(1.0 - ab) * _as_array(eps)) / np.sqrt(ab)


def _lift(grid: np.ndarray, ndim: int) -> np.ndarray:
    """Broadcast an (L, P)- or (2, L, P)-shaped grid against an eps array of
    ``ndim`` axes (3 for single, 4 for batched)."""
    return grid.reshape((1,) * (ndim - grid.ndim) + grid.shape)


def _check_roll_shapes(eps: np.ndarray, x_t: np.ndarray, mask: ConstraintMask):
    if eps.shape != x_t.shape:
        raise InvalidInputError(f"eps shape {eps.shape} != x_t shape {x_t.shape}")
    if eps.ndim not in (3, 4) or eps.shape[-3] != CHANNELS or eps.shape[-1] != PITCHES:
        raise InvalidInputError(
            f"expected (..., 2, L, 128) arrays, got {eps.shape}")
    if eps.shape[-2] != mask.length:
        raise LengthMismatchError(
            f"mask covers {mask.length} steps, arrays have {eps.shape[-2]}")


def _clamp_bound(x_t: np.ndarray, t: int, sched: NoiseSchedule, target: float
                 ) -> np.ndarray:
    """Noise value at which predicted X0 equals ``target``."""
    ab = sched.alpha_bar[sched.check_t(t)]
    return (x_t - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)


def correct_harmonic(eps_hat, x_t, t: int, mask: ConstraintMask,
                     sched: NoiseSchedule, kappa: float = DEFAULT_KAPPA
                     ) -> np.ndarray:
    """Clamp predicted X0 to <= 1/2 - kappa at out-of-key cells, both channels."""
    eps, x = _as_array(eps_hat), _as_array(x_t)
    _check_roll_shapes(eps, x, mask)
    if not mask.has_key_rules():
        return eps
    cells = _lift(mask.key_mask, eps.ndim)
    bound = _clamp_bound(x, t, sched, 0.5 - kappa)
    return np.where(cells, np.maximum(eps, bound), eps)


def correct_rhythm(eps_hat, x_t, t: int, mask: ConstraintMask,
                   sched: NoiseSchedule, kappa: float = DEFAULT_KAPPA,
                   candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply per-column onset-count rules on the onset channel.

    ``candidates`` restricts which pitches the rules may touch (default: all;
    joint control passes the in-key grid). Raises InfeasibleConstraintError
    when a column demands more onsets than it has candidate pitches.
    """
    eps, x = _as_array(eps_hat), _as_array(x_t)
    _check_roll_shapes(eps, x, mask)
    if not mask.has_rhythm_rules():
        return eps
    if candidates is None:
        candidates = np.ones((mask.length, PITCHES), dtype=bool)
    else:
        candidates = np.asarray(candidates, dtype=bool)
        if candidates.shape != (mask.length, PITCHES):
            raise InvalidInputError(
                f"candidates must be (L, 128), got {candidates.shape}")

    counted = np.isin(mask.rhythm_kinds, (R_EXACTLY, R_AT_LEAST))
    avail = candidates.sum(axis=1)
    bad = counted & (mask.rhythm_n > avail)
    if bad.any():
        cols = [int(c) for c in np.flatnonzero(bad)]
        raise InfeasibleConstraintError(
            f"columns {cols} demand more onsets than candidate pitches",
            columns=cols,
            required=[int(n) for n in mask.rhythm_n[bad]],
            candidates=[int(a) for a in avail[bad]])

    batched = eps.ndim == 4
    eps_b = eps if batched else eps[None]
    x_b = x if batched else x[None]
    p = predict_x0(x_b[:, ONSET], eps_b[:, ONSET], t, sched)
    raise_cells, lower_cells = kernels.rhythm_select(
        np.ascontiguousarray(p), np.ascontiguousarray(candidates),
        mask.rhythm_kinds, mask.rhythm_n, kappa)

    out = eps_b.copy()
    onset_eps = out[:, ONSET]
    low_bound = _clamp_bound(x_b[:, ONSET], t, sched, 0.5 - kappa)
    high_value = _clamp_bound(x_b[:, ONSET], t, sched, 0.5 + kappa)
    onset_eps[lower_cells] = np.maximum(onset_eps, low_bound)[lower_cells]
    onset_eps[raise_cells] = high_value[raise_cells]
    return out if batched else out[0]


def correct_joint(eps_hat, x_t, t: int, mask: ConstraintMask,
                  sched: NoiseSchedule, kappa: float = DEFAULT_KAPPA
                  ) -> np.ndarray:
    """Harmonic clamp on both channels, then rhythm rules restricted to
    in-key candidates (all pitches if the mask disables joint control). The
    two phases touch disjoint on-targets, so the composition solves the
    intersection constraint exactly."""
    out = correct_harmonic(eps_hat, x_t, t, mask, sched, kappa)
    cand = ~mask.key_mask if mask.restrict_to_in_key else None
    return correct_rhythm(out, x_t, t, mask, sched, kappa, candidates=cand)


def _reverse_update(x_t: np.ndarray, eps: np.ndarray, t: int, t_prev: int,
                    sigma: float, sched: NoiseSchedule,
                    noise: Optional[np.ndarray] = None) -> np.ndarray:
    ab_prev = sched.alpha_bar[t_prev]
    x0 = predict_x0(x_t, eps, t, sched)
    coef = 1.0 - ab_prev - sigma * sigma
    if coef < 0.0:
        if coef < -1e-12:
            raise ScheduleError(
                f"sigma {sigma} too large for jump {t}->{t_prev}: "
                f"1 - abar - sigma^2 = {coef}")
        coef = 0.0
    out = np.sqrt(ab_prev) * x0 + np.sqrt(coef) * eps
    if sigma > 0.0:
        if noise is None:
            raise InvalidInputError("stochastic step (sigma > 0) requires noise")
        out = out + sigma * noise
    return out


def ddpm_step(x_t, eps_tilde, t: int, sched: NoiseSchedule,
              noise: Optional[np.ndarray] = None,
              final_deterministic: bool = True) -> np.ndarray:
    """One ancestral step t -> t-1."""
    t = sched.check_t(t)
    sigma = 0.0 if (t == 1 and final_deterministic) else sched.sigma_between(t - 1, t)
    noise_arr = None if noise is None else _as_array(noise)
    return _reverse_update(_as_array(x_t), _as_array(eps_tilde), t, t - 1,
                           sigma, sched, noise_arr)


def ddim_step(x_t, eps_tilde, t: int, t_prev: int, sched: NoiseSchedule,
              noise: Optional[np.ndarray] = None, eta: Optional[float] = None,
              final_deterministic: bool = True) -> np.ndarray:
    """One accelerated jump t -> t_prev (t_prev may skip steps; 0 finishes)."""
    t = sched.check_t(t)
    if t_prev == 0 and final_deterministic:
        sigma = 0.0
    else:
        sigma = sched.sigma_between(t_prev, t, eta=eta)
    noise_arr = None if noise is None else _as_array(noise)
    return _reverse_update(_as_array(x_t), _as_array(eps_tilde), t, t_prev,
                           sigma, sched, noise_arr)


# ---------------------------------------------------------------------------
# full sampling pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conditions:
    """Everything a guided generation is conditioned on.

    ``rhythm`` feeds the condition planes (and triggers guidance weight 1 by
    default); ``rhythm_spec`` carries the per-column onset-count rules the
    correction enforces. ``keys`` defaults to keys derived from the chords
    (C major when there are no chords either).
    """

    length: int
    chords: Optional[ChordProgression] = None
    rhythm: Optional[RhythmPattern] = None
    rhythm_spec: Optional[tuple[ColumnSpec, ...]] = None
    melody: Optional[PianoRoll] = None
    keys: Optional[KeySequence] = None
    restrict_to_in_key: bool = True

    def __post_init__(self):
        if self.length < 1:
            raise InvalidInputError("length must be >= 1")
        for name in ("chords", "rhythm", "melody", "keys"):
            obj = getattr(self, name)
            if obj is not None and obj.length < self.length:
                raise LengthMismatchError(
                    f"{name} covers {obj.length} steps, need {self.length}")
        if self.rhythm_spec is not None:
            if len(self.rhythm_spec) != self.length:
                raise LengthMismatchError(
                    f"rhythm_spec has {len(self.rhythm_spec)} columns, "
                    f"need {self.length}")
            object.__setattr__(self, "rhythm_spec", tuple(self.rhythm_spec))

    def resolve_keys(self) -> KeySequence:
        if self.keys is not None:
            if self.keys.length == self.length:
                return self.keys
            return KeySequence(self.keys.keys[:self.length])
        if self.chords is not None:
            chords = self.chords
            if chords.length != self.length:
                chords = ChordProgression(chords.chords[:self.length])
            return derive_keys_from_chords(chords)
        return KeySequence.constant(KeySignature(0, "major"), self.length)

    def build_mask(self) -> ConstraintMask:
        return build_constraint_mask(self.resolve_keys(), self.rhythm_spec,
                                     self.restrict_to_in_key)


@dataclass(frozen=True)
class SampleResult:
    latent: LatentRoll
    roll: PianoRoll
    keys: KeySequence
    mask: ConstraintMask
    warnings: tuple[str, ...]
    seed: int


def _condition_planes(conditions: Conditions) -> tuple[np.ndarray, np.ndarray]:
    """(chord-only plane, chord+rhythm plane), each (2, L, 128) float64."""
    L = conditions.length
    if conditions.chords is not None:
        cond_c = build_condition_c(conditions.chords, L).data
        rhythm = conditions.rhythm or RhythmPattern.empty(L)
        cond_cr = build_condition_cr(conditions.chords, rhythm, L).data
    else:
        cond_c = np.full((CHANNELS, L, PITCHES), -1.0)
        cond_cr = np.zeros((CHANNELS, L, PITCHES))
    return cond_c, cond_cr


def _binarize_batch(x0: np.ndarray, mask: ConstraintMask) -> np.ndarray:
    out = (x0 >= 0.5).astype(np.uint8)
    forced = mask.zero_cells()
    out[:, forced] = (x0[:, forced] > 0.5).astype(np.uint8)
    return out


def _make_predictor(denoiser: Denoiser, conditions: Conditions, w: float,
                    n_samples: int) -> Callable[[np.ndarray, int], np.ndarray]:
    L = conditions.length
    cond_c, cond_cr = _condition_planes(conditions)
    if conditions.melody is not None:
        mel = conditions.melody.data[:, :L].astype(np.float64)
    else:
        mel = np.zeros((CHANNELS, L, PITCHES))
    tail_c = np.broadcast_to(np.concatenate([cond_c, mel], axis=0),
                             (n_samples, 2 * CHANNELS, L, PITCHES))
    tail_cr = np.broadcast_to(np.concatenate([cond_cr, mel], axis=0),
                              (n_samples, 2 * CHANNELS, L, PITCHES))

    def predict(x: np.ndarray, t: int) -> np.ndarray:
        eps_c = denoiser.predict_batch(np.concatenate([x, tail_c], axis=1), t)
        if w == 0.0 or not denoiser.supports_conditions:
            return np.asarray(eps_c, dtype=np.float64)
        eps_cr = denoiser.predict_batch(np.concatenate([x, tail_cr], axis=1), t)
        return cfg_combine(eps_c, eps_cr, w)

    return predict


def sample_batch(denoiser: Denoiser, conditions: Conditions,
                 sched: NoiseSchedule, guidance: Optional[GuidanceConfig] = None,
                 plan: Optional[SamplerPlan] = None, seed: int = 0,
                 n_samples: int = 1):
    """Run ``n_samples`` guided trajectories in lockstep.

    Returns (x0 (B, 2, L, 128) float64, binarized (B, 2, L, 128) uint8,
    keys, mask, warnings). Deterministic given (seed, n_samples).
    """
    guidance = guidance or GuidanceConfig()
    plan = plan or SamplerPlan()
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")

    keys = conditions.resolve_keys()
    mask = conditions.build_mask()
    warns: list[str] = []
    if conditions.chords is not None:
        chords = conditions.chords
        if chords.length != conditions.length:
            chords = ChordProgression(chords.chords[:conditions.length])
        bad = out_of_key_chord_columns(chords, keys)
        if bad:
            msg = (f"chords contain out-of-key tones at steps {bad[:8]}"
                   f"{'...' if len(bad) > 8 else ''}; the key constraint wins")
            warns.append(msg)
            warnings.warn(msg)

    w = guidance.resolve_w(conditions.rhythm is not None
                           or mask.has_rhythm_rules())
    predictor = _make_predictor(denoiser, conditions, w, n_samples)

    do_harmonic = guidance.harmonic and mask.has_key_rules()
    do_rhythm = guidance.rhythm and mask.has_rhythm_rules()

    def correct(eps: np.ndarray, x: np.ndarray, t: int) -> np.ndarray:
        if do_harmonic and do_rhythm:
            return correct_joint(eps, x, t, mask, sched, guidance.kappa)
        if do_harmonic:
            return correct_harmonic(eps, x, t, mask, sched, guidance.kappa)
        if do_rhythm:
            return correct_rhythm(eps, x, t, mask, sched, guidance.kappa)
        return eps

    rng = make_rng(seed)
    shape = (n_samples, CHANNELS, conditions.length, PITCHES)
    x = rng.standard_normal(shape)
    for t, t_prev in plan.step_pairs(sched):
        eps = correct(predictor(x, t), x, t)
        if t_prev == 0 and guidance.final_deterministic:
            sigma = 0.0
        else:
            sigma = sched.sigma_between(t_prev, t, eta=plan.eta)
        noise = rng.standard_normal(shape) if sigma > 0.0 else None
        x = _reverse_update(x, eps, t, t_prev, sigma, sched, noise)
    return x, _binarize_batch(x, mask), keys, mask, tuple(warns)


def sample(denoiser: Denoiser, conditions: Conditions, sched: NoiseSchedule,
           guidance: Optional[GuidanceConfig] = None,
           plan: Optional[SamplerPlan] = None, seed: int = 0) -> SampleResult:
    """Generate one piece; see sample_batch for the trajectory contract."""
    x0, bins, keys, mask, warns = sample_batch(
        denoiser, conditions, sched, guidance, plan, seed, n_samples=1)
    return SampleResult(latent=LatentRoll(x0[0]), roll=PianoRoll(bins[0]),
                        keys=keys, mask=mask, warnings=warns, seed=int(seed))
