"""Conditional denoiser training with classifier-free condition dropout.

Each step draws one timestep and one noise tensor per sample, corrupts the
clean rolls, and regresses the denoiser output onto the noise. With
probability ``p_drop`` a sample sees the chord-only condition plane instead
of the chord+rhythm plane; that Bernoulli split is the sampling form of the
two-term conditional loss (the relative frequency of the two forms plays the
role of per-term weights).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ftg.denoisers import ToyDenoiser
from ftg.errors import InvalidInputError, LengthMismatchError
from ftg.pianoroll import CHANNELS, PITCHES, PianoRoll
from ftg.rngs import make_rng
from ftg.schedule import NoiseSchedule
from ftg.theory import ChordProgression, RhythmPattern, recognize_chords


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    p_drop: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise InvalidInputError("learning rate must be > 0")
        if not 0.0 <= self.p_drop <= 1.0:
            raise InvalidInputError(f"p_drop must be in [0, 1], got {self.p_drop}")


@dataclass(frozen=True)
class TrainingExample:
    """Clean roll plus its conditions; chords/rhythm are derived from the
    roll when omitted."""

    roll: PianoRoll
    chords: Optional[ChordProgression] = None
    rhythm: Optional[RhythmPattern] = None
    melody: Optional[PianoRoll] = None

    def __post_init__(self):
        if not isinstance(self.roll, PianoRoll):
            raise InvalidInputError("training example needs a PianoRoll roll")


@dataclass
class StepStats:
    """Instrumented counters: how many samples saw each condition form."""

    chord_only: int = 0
    chord_rhythm: int = 0
    steps: int = 0


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    stats: StepStats = field(default_factory=StepStats)

    @property
    def first_epoch_loss(self) -> float:
        return self.epoch_losses[0]

    @property
    def final_epoch_loss(self) -> float:
        return self.epoch_losses[-1]


class AdamW:
    """Decoupled weight decay Adam over a named parameter dict (in place)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.eps, self.weight_decay = eps, weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @staticmethod
    def for_config(params: dict[str, np.ndarray], config: TrainConfig) -> "AdamW":
        return AdamW(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                     eps=config.adam_eps, weight_decay=config.weight_decay)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name].astype(p.dtype, copy=False)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def extract_rhythm(roll: PianoRoll) -> RhythmPattern:
    """Rhythmic identification: the set of columns holding at least one onset."""
    cols = roll.onsets().any(axis=1)
    return RhythmPattern(frozenset(int(l) for l in np.flatnonzero(cols)),
                         roll.length)


def _example_planes(ex: TrainingExample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(chord-only plane, chord+rhythm plane, melody plane) for one example."""
    from ftg.pianoroll import build_condition_c, build_condition_cr

    chords = ex.chords if ex.chords is not None else recognize_chords(ex.roll)
    rhythm = ex.rhythm if ex.rhythm is not None else extract_rhythm(ex.roll)
    cond_c = build_condition_c(chords, ex.roll.length).data
    cond_cr = build_condition_cr(chords, rhythm, ex.roll.length).data
    if ex.melody is not None:
        if ex.melody.length != ex.roll.length:
            raise LengthMismatchError("melody length differs from roll length")
        mel = ex.melody.data.astype(np.float64)
    else:
        mel = np.zeros((CHANNELS, ex.roll.length, PITCHES))
    return cond_c, cond_cr, mel


def training_step(batch: Sequence[TrainingExample], denoiser: ToyDenoiser,
                  opt: AdamW, config: TrainConfig, sched: NoiseSchedule,
                  rng: np.random.Generator,
                  stats: Optional[StepStats] = None) -> float:
    """One optimizer update on a batch; returns the batch mean loss."""
    if len(batch) == 0:
        raise InvalidInputError("training batch must be nonempty")
    lengths = {ex.roll.length for ex in batch}
    if len(lengths) != 1:
        raise LengthMismatchError(f"batch mixes roll lengths {sorted(lengths)}")
    length = lengths.pop()

    B = len(batch)
    t = rng.integers(1, sched.T + 1, size=B)
    x0 = np.stack([ex.roll.data.astype(np.float64) for ex in batch])
    eps = rng.standard_normal(x0.shape)
    ab = sched.alpha_bar[t].reshape(-1, 1, 1, 1)
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    drop = rng.random(B) < config.p_drop
    inputs = np.empty((B, 2 * CHANNELS + CHANNELS, length, PITCHES))
    for i, ex in enumerate(batch):
        cond_c, cond_cr, mel = _example_planes(ex)
        cond = cond_c if drop[i] else cond_cr
        inputs[i] = np.concatenate([x_t[i], cond, mel], axis=0)
    if stats is not None:
        stats.chord_only += int(drop.sum())
        stats.chord_rhythm += int(B - drop.sum())
        stats.steps += 1

    pred, cache = denoiser.forward(inputs, t)
    resid = pred.astype(np.float64) - eps
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise InvalidInputError(f"non-finite training loss {loss}; step aborted")
    gy = (2.0 / resid.size) * resid
    grads = denoiser.backward(cache, gy)
    opt.step(grads)
    denoiser._check_finite()
    return loss


def train(denoiser: ToyDenoiser, examples: Sequence[TrainingExample],
          config: TrainConfig, sched: NoiseSchedule, seed: int = 0,
          callback: Optional[Callable[[int, float], None]] = None) -> TrainReport:
    """Epoch loop with per-epoch shuffling; returns per-epoch mean losses."""
    if len(examples) == 0:
        raise InvalidInputError("training corpus must be nonempty")
    rng = make_rng(seed)
    opt = AdamW.for_config(denoiser.params, config)
    report = TrainReport()
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        losses = []
        for start in range(0, len(examples), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            losses.append(training_step(batch, denoiser, opt, config, sched,
                                        rng, report.stats))
        epoch_loss = float(np.mean(losses))
        report.epoch_losses.append(epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
    return report
