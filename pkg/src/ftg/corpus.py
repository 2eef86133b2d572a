"""Synthetic training corpus.

Each piece picks a key, a scale-degree progression template, and a rhythm
template, renders the accompaniment as block chord-tone patterns and the
melody as an in-key stepwise line. Every pitch is diatonic by construction,
so the corpus has out-of-key rate exactly 0 against its generating keys, and
the chord recognizer recovers the rendered progressions (the default
templates avoid degree patterns that are recognition-ambiguous).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ftg.errors import InvalidInputError
from ftg.midi_io import emit_midi, parse_midi, quantize, select_tracks
from ftg.pianoroll import CHANNELS, PITCHES, PianoRoll
from ftg.rngs import make_rng
from ftg.theory import (CHORD_TEMPLATES, Chord, ChordProgression, KeySequence,
                        KeySignature, RhythmPattern)
from ftg.training import TrainingExample

STEPS_PER_MEASURE = 16

# scale-degree symbols over a major key: (semitone offset, chord quality)
DEGREES = {
    "I": (0, "maj"), "ii": (2, "min"), "iii": (4, "min"), "IV": (5, "maj"),
    "V": (7, "maj"), "V7": (7, "dom7"), "vi": (9, "min"),
}

DEFAULT_PROGRESSIONS = (
    ("I", "IV", "V", "I"),
    ("I", "vi", "IV", "V"),
    ("I", "V", "vi", "IV"),
    ("ii", "V", "I", "I"),
)
DEFAULT_RHYTHMS = (
    "x...x...x...x...",
    "x.x.x.x.x.x.x.x.",
    "x..x..x.x..x..x.",
)


@dataclass(frozen=True)
class CorpusSpec:
    pieces: int = 64
    measures: int = 4
    keys: tuple[str, ...] = ("C", "G", "D", "F", "A")
    progressions: tuple[tuple[str, ...], ...] = DEFAULT_PROGRESSIONS
    rhythms: tuple[str, ...] = DEFAULT_RHYTHMS
    seed: int = 0

    def __post_init__(self):
        if self.pieces < 1 or self.measures < 1:
            raise InvalidInputError("pieces and measures must be >= 1")
        if not self.keys or not self.progressions or not self.rhythms:
            raise InvalidInputError("key/progression/rhythm pools must be nonempty")
        for rhythm in self.rhythms:
            if len(rhythm) != STEPS_PER_MEASURE or set(rhythm) - set("x."):
                raise InvalidInputError(
                    f"rhythm template {rhythm!r} must be 16 chars over 'x', '.'")
        for template in self.progressions:
            for degree in template:
                if degree not in DEGREES:
                    raise InvalidInputError(
                        f"unknown scale degree {degree!r}; pick from "
                        f"{sorted(DEGREES)}")


@dataclass(frozen=True)
class CorpusPiece:
    name: str
    melody: PianoRoll
    accompaniment: PianoRoll
    chords: ChordProgression
    rhythm: RhythmPattern
    keys: KeySequence
    key_symbol: str
    progression: tuple[str, ...] = field(default=())
    rhythm_template: str = ""


def degree_chord(key: KeySignature, degree: str) -> Chord:
    offset, quality = DEGREES[degree]
    return Chord((key.tonic + offset) % 12, quality)


def _render_accompaniment(chords: ChordProgression, onset_steps: list[int],
                          length: int) -> PianoRoll:
    """Block chord voicings (root position around octave 3) at the rhythm
    onsets, sustained to the next onset but capped at the measure boundary so
    each measure carries only its own chord."""
    data = np.zeros((CHANNELS, length, PITCHES), dtype=np.uint8)
    onset_set = sorted(onset_steps)
    for i, l in enumerate(onset_set):
        nxt = onset_set[i + 1] if i + 1 < len(onset_set) else length
        measure_end = (l // STEPS_PER_MEASURE + 1) * STEPS_PER_MEASURE
        end = min(nxt, measure_end, length)
        chord = chords[l]
        base = 48 + chord.root
        for iv in CHORD_TEMPLATES[chord.quality]:
            data[0, l, base + iv] = 1
            data[1, l + 1:end, base + iv] = 1
    return PianoRoll(data)


def _render_melody(key: KeySignature, length: int,
                   rng: np.random.Generator) -> PianoRoll:
    """In-key stepwise line, one note per beat (4 steps)."""
    pcs = sorted(key.in_key_pitch_classes())
    scale = [12 * octave + pc for octave in range(5, 7) for pc in pcs]
    scale = [p for p in scale if p < PITCHES]
    pos = min(range(len(scale)),
              key=lambda i: abs(scale[i] - (72 + key.tonic)))
    data = np.zeros((CHANNELS, length, PITCHES), dtype=np.uint8)
    for beat_start in range(0, length, 4):
        pos = int(np.clip(pos + rng.integers(-1, 2), 0, len(scale) - 1))
        pitch = scale[pos]
        data[0, beat_start, pitch] = 1
        data[1, beat_start + 1:min(beat_start + 4, length), pitch] = 1
    return PianoRoll(data)


def synth_corpus(spec: CorpusSpec) -> list[CorpusPiece]:
    rng = make_rng(spec.seed)
    length = spec.measures * STEPS_PER_MEASURE
    pieces = []
    for index in range(spec.pieces):
        key = KeySignature.parse(spec.keys[rng.integers(len(spec.keys))])
        template = spec.progressions[rng.integers(len(spec.progressions))]
        rhythm_template = spec.rhythms[rng.integers(len(spec.rhythms))]

        measure_chords = [degree_chord(key, template[m % len(template)])
                          for m in range(spec.measures)]
        chords = ChordProgression(tuple(
            chord for chord in measure_chords for _ in range(STEPS_PER_MEASURE)))
        full_pattern = rhythm_template * spec.measures
        onsets = [l for l, ch in enumerate(full_pattern) if ch == "x"]
        rhythm = RhythmPattern(frozenset(onsets), length)

        pieces.append(CorpusPiece(
            name=f"piece_{index:03d}",
            melody=_render_melody(key, length, rng),
            accompaniment=_render_accompaniment(chords, onsets, length),
            chords=chords,
            rhythm=rhythm,
            keys=KeySequence.constant(key, length),
            key_symbol=key.symbol,
            progression=tuple(template),
            rhythm_template=rhythm_template,
        ))
    return pieces


def examples_from_pieces(pieces: list[CorpusPiece]) -> list[TrainingExample]:
    """Training view: the accompaniment is the prediction target."""
    return [TrainingExample(roll=p.accompaniment, chords=p.chords,
                            rhythm=p.rhythm, melody=p.melody)
            for p in pieces]


def save_corpus(pieces: list[CorpusPiece], directory,
                spec: Optional[CorpusSpec] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"pieces": [], "spec": asdict(spec) if spec else None}
    for piece in pieces:
        filename = f"{piece.name}.mid"
        (directory / filename).write_bytes(
            emit_midi(piece.melody, piece.accompaniment))
        manifest["pieces"].append({
            "file": filename,
            "key": piece.key_symbol,
            "progression": list(piece.progression),
            "rhythm": piece.rhythm_template,
            "measures": piece.accompaniment.length // STEPS_PER_MEASURE,
        })
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n")
    return directory


def load_corpus(directory) -> list[TrainingExample]:
    """Load a saved corpus directory (or any directory of .mid files) as
    training examples; chords/rhythm come from the manifest when present and
    are otherwise derived from the rolls."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    entries: list[tuple[Path, Optional[dict]]]
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
        entries = [(directory / e["file"], e) for e in manifest["pieces"]]
    else:
        entries = [(p, None) for p in sorted(directory.glob("*.mid"))]
    examples = []
    for path, entry in entries:
        rolls = quantize(parse_midi(path.read_bytes()))
        melody, accomp = select_tracks(rolls)
        if accomp is None:
            continue
        chords = rhythm = None
        if entry is not None:
            key = KeySignature.parse(entry["key"])
            measures = int(entry["measures"])
            measure_chords = [degree_chord(key, entry["progression"]
                                           [m % len(entry["progression"])])
                              for m in range(measures)]
            chords = ChordProgression(tuple(
                c for c in measure_chords for _ in range(STEPS_PER_MEASURE)))
            pattern = entry["rhythm"] * measures
            rhythm = RhythmPattern(
                frozenset(l for l, ch in enumerate(pattern) if ch == "x"),
                measures * STEPS_PER_MEASURE)
        examples.append(TrainingExample(roll=accomp, chords=chords,
                                        rhythm=rhythm, melody=melody))
    if not examples:
        raise InvalidInputError(f"no corpus pieces found under {directory}")
    return examples
