"""Evaluation metrics over 2-measure segments.

Feature histograms are discrete (16th-note / MIDI resolution): pitch uses the
128 MIDI bins, duration uses 16th-note counts 1..32 plus an overflow bin,
note density uses onsets-per-step counts 0..12 plus overflow. Distribution
overlap is the summed bin-wise minimum. A segment is "empty" when it holds
no onsets; aligned empty/empty pairs score 1, empty/nonempty pairs score 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ftg.errors import LengthMismatchError, MetricError
from ftg.pianoroll import ONSET, PITCHES, SUSTAIN, PianoRoll
from ftg.theory import KeySequence, RhythmPattern, recognize_chords

STEPS_PER_MEASURE = 16
DURATION_BINS = 33     # 1..32 sixteenths, index 32 = overflow
DENSITY_BINS = 14      # 0..12 onsets per step, index 13 = overflow
FEATURES = ("pitch", "duration", "density")


@dataclass(frozen=True)
class SegmentFeatures:
    pitch: np.ndarray
    duration: np.ndarray
    density: np.ndarray
    empty: bool

    def histogram(self, feature: str) -> np.ndarray:
        if feature not in FEATURES:
            raise MetricError(f"unknown feature {feature!r}; pick from {FEATURES}")
        return getattr(self, feature)


@dataclass(frozen=True)
class SimilarityReport:
    mean: float
    ci95: float
    n: int
    skipped: int = 0

    def to_json(self, metric: str = "chord_similarity") -> dict:
        return {"metric": metric, "mean": self.mean, "ci95": self.ci95, "n": self.n}


def segment(roll: PianoRoll, bars_per_segment: int = 2) -> list[PianoRoll]:
    """Split into ordered non-overlapping segments; a trailing partial
    segment is padded with empty steps (flagged via a warning)."""
    if bars_per_segment < 1:
        raise MetricError("bars_per_segment must be >= 1")
    seg_len = bars_per_segment * STEPS_PER_MEASURE
    data = roll.data
    if roll.length % seg_len != 0:
        pad = seg_len - roll.length % seg_len
        warnings.warn(f"roll length {roll.length} padded by {pad} empty steps "
                      f"to fill a {seg_len}-step segment")
        data = np.concatenate(
            [data, np.zeros((2, pad, PITCHES), dtype=data.dtype)], axis=1)
    return [PianoRoll(data[:, s:s + seg_len])
            for s in range(0, data.shape[1], seg_len)]


def note_durations(roll: PianoRoll) -> list[tuple[int, int, int]]:
    """(step, pitch, duration-in-16ths) per onset; duration counts the onset
    step plus the run of sustain cells that follows (a new onset ends it)."""
    onsets = roll.data[ONSET]
    sustains = roll.data[SUSTAIN]
    notes = []
    for l, h in zip(*np.nonzero(onsets)):
        d = 1
        while (l + d < roll.length and sustains[l + d, h] == 1
               and onsets[l + d, h] == 0):
            d += 1
        notes.append((int(l), int(h), d))
    return notes


def segment_features(seg: PianoRoll) -> SegmentFeatures:
    notes = note_durations(seg)
    empty = len(notes) == 0
    pitch = np.zeros(PITCHES)
    duration = np.zeros(DURATION_BINS)
    density = np.zeros(DENSITY_BINS)
    if not empty:
        for _, h, d in notes:
            pitch[h] += 1
            duration[d - 1 if d < DURATION_BINS else DURATION_BINS - 1] += 1
        per_step = seg.data[ONSET].sum(axis=1)
        for c in per_step:
            density[min(int(c), DENSITY_BINS - 1)] += 1
        pitch /= pitch.sum()
        duration /= duration.sum()
        density /= density.sum()
    return SegmentFeatures(pitch, duration, density, empty)


def overlap(h1: np.ndarray, h2: np.ndarray) -> float:
    """Summed bin-wise minimum of two normalized histograms on shared bins."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise MetricError(f"histogram shapes differ: {h1.shape} vs {h2.shape}")
    for h in (h1, h2):
        if (h < 0).any() or abs(h.sum() - 1.0) > 1e-9:
            raise MetricError(
                f"histogram must be normalized (sum 1), got sum {h.sum()}")
    return float(np.minimum(h1, h2).sum())


def _pair_overlaps(gen: PianoRoll, gt: PianoRoll, feature: str,
                   bars_per_segment: int) -> list[float]:
    if feature not in FEATURES:
        raise MetricError(f"unknown feature {feature!r}; pick from {FEATURES}")
    segs_gen = [segment_features(s) for s in segment(gen, bars_per_segment)]
    segs_gt = [segment_features(s) for s in segment(gt, bars_per_segment)]
    n = min(len(segs_gen), len(segs_gt))
    if len(segs_gen) != len(segs_gt):
        warnings.warn(f"segment counts differ ({len(segs_gen)} vs "
                      f"{len(segs_gt)}); truncating to {n}")
    values = []
    for a, b in zip(segs_gen[:n], segs_gt[:n]):
        if a.empty and b.empty:
            values.append(1.0)
        elif a.empty or b.empty:
            values.append(0.0)
        else:
            values.append(overlap(a.histogram(feature), b.histogram(feature)))
    return values


def moa(gen: PianoRoll, gt: PianoRoll, feature: str,
        bars_per_segment: int = 2) -> float:
    """Macro overlapping area: mean per-aligned-segment histogram overlap."""
    values = _pair_overlaps(gen, gt, feature, bars_per_segment)
    if not values:
        raise MetricError("no segments to compare")
    return float(np.mean(values))


def moa_many(pairs: list[tuple[PianoRoll, PianoRoll]], feature: str,
             bars_per_segment: int = 2) -> float:
    """MOA pooled over every aligned segment of every (gen, gt) pair."""
    values: list[float] = []
    for gen, gt in pairs:
        values.extend(_pair_overlaps(gen, gt, feature, bars_per_segment))
    if not values:
        raise MetricError("no segments to compare")
    return float(np.mean(values))


def _segment_chord_embedding(chords, start: int, length: int) -> np.ndarray:
    """Duration-weighted 24-dim chroma+bass vector of a chord-progression
    window: each step adds 1 to every chord-tone chroma bin and to the bass
    (root) bin."""
    emb = np.zeros(24)
    for l in range(start, start + length):
        chord = chords[l]
        for pc in chord.pitch_classes():
            emb[pc] += 1.0
        emb[12 + chord.root] += 1.0
    return emb


def _pair_cosines(gen: PianoRoll, gt: PianoRoll,
                  bars_per_segment: int) -> tuple[list[float], int]:
    chords_gen = recognize_chords(gen)
    chords_gt = recognize_chords(gt)
    seg_len = bars_per_segment * STEPS_PER_MEASURE
    n_pairs = min(chords_gen.length, chords_gt.length) // seg_len
    if n_pairs == 0:
        raise MetricError("rolls shorter than one segment")
    cosines = []
    skipped = 0
    for i in range(n_pairs):
        a = _segment_chord_embedding(chords_gen, i * seg_len, seg_len)
        b = _segment_chord_embedding(chords_gt, i * seg_len, seg_len)
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            skipped += 1
            continue
        cosines.append(float(a @ b / (na * nb)))
    return cosines, skipped


def _similarity_report(cosines: list[float], skipped: int) -> SimilarityReport:
    if not cosines:
        raise MetricError("every segment pair was degenerate")
    arr = np.asarray(cosines)
    half = 0.0 if len(arr) < 2 else float(1.96 * arr.std(ddof=1) / np.sqrt(len(arr)))
    return SimilarityReport(mean=float(arr.mean()), ci95=half, n=len(arr),
                            skipped=skipped)


def chord_similarity(gen: PianoRoll, gt: PianoRoll,
                     bars_per_segment: int = 2) -> SimilarityReport:
    """Cosine similarity of recognized-chord embeddings per aligned 2-measure
    segment, reported as mean with a normal-approximation 95% interval."""
    return _similarity_report(*_pair_cosines(gen, gt, bars_per_segment))


def chord_similarity_many(pairs: list[tuple[PianoRoll, PianoRoll]],
                          bars_per_segment: int = 2) -> SimilarityReport:
    """Chord similarity pooled over every segment of every (gen, gt) pair."""
    cosines: list[float] = []
    skipped = 0
    for gen, gt in pairs:
        cos, sk = _pair_cosines(gen, gt, bars_per_segment)
        cosines.extend(cos)
        skipped += sk
    return _similarity_report(cosines, skipped)


def out_of_key_rate(roll: PianoRoll, keys: KeySequence) -> float:
    """Fraction of onset cells at out-of-key positions (0 with no onsets)."""
    if keys.length != roll.length:
        raise LengthMismatchError(
            f"keys cover {keys.length} steps, roll has {roll.length}")
    onsets = roll.onsets()
    total = int(onsets.sum())
    if total == 0:
        return 0.0
    return float((onsets & keys.out_of_key_grid()).sum() / total)


def rhythm_match_rate(roll: PianoRoll, rhythm: RhythmPattern) -> float:
    """Fraction of columns whose onset presence equals rhythm membership."""
    if rhythm.length != roll.length:
        raise LengthMismatchError(
            f"rhythm covers {rhythm.length} steps, roll has {roll.length}")
    has_onset = roll.onsets().any(axis=1)
    return float((has_onset == rhythm.onset_mask()).mean())
