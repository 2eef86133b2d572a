"""Music-theory layer.

Produces the index sets the guidance math consumes: out-of-key pitch classes
per key, chord-tone pitch classes, derived key sequences, recognized chord
progressions, and the combined constraint mask (out-of-key grid plus
per-column onset-count rules).

Pitch classes are integers 0..11 with C = 0. Chord and key membership is
defined on pitch classes and expanded across all octaves of the 128-pitch
axis.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ftg.errors import InvalidInputError, LengthMismatchError
from ftg.pianoroll import CHANNELS, ONSET, PITCHES, PianoRoll

MAJOR_SCALE = frozenset((0, 2, 4, 5, 7, 9, 11))
# natural minor plus the harmonic-minor leading tone treated as in-key
MINOR_IN_KEY = frozenset((0, 2, 3, 5, 7, 8, 10, 11))

PC_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_LETTER_TO_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

CHORD_TEMPLATES: dict[str, tuple[int, ...]] = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "dom7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
}
# tie-break order for chord recognition (earlier wins)
TEMPLATE_PRIORITY = ("maj", "min", "dom7", "min7", "maj7", "dim", "aug")

_QUALITY_SUFFIX = {"maj": "", "min": "m", "dom7": "7", "maj7": "maj7",
                   "min7": "m7", "dim": "dim", "aug": "aug"}
# longest-first so "maj7" is not read as root + "m"
_SUFFIX_QUALITY = sorted(((s, q) for q, s in _QUALITY_SUFFIX.items()),
                         key=lambda sq: -len(sq[0]))

_PC_OF_PITCH = np.arange(PITCHES) % 12


def parse_pitch_class(text: str) -> int:
    m = re.fullmatch(r"([A-Ga-g])([#b]?)", text.strip())
    if not m:
        raise InvalidInputError(f"bad note name {text!r}")
    pc = _LETTER_TO_PC[m.group(1).upper()]
    if m.group(2) == "#":
        pc += 1
    elif m.group(2) == "b":
        pc -= 1
    return pc % 12


@dataclass(frozen=True)
class KeySignature:
    """Tonal center: tonic pitch class plus major/minor mode.

    ``extra_in_key`` is an optional allowlist of additional pitch classes to
    treat as in-key (e.g. a borrowed flat-seventh), absolute, not relative to
    the tonic. Default empty keeps the strict diatonic rule.
    """

    tonic: int
    mode: str = "major"
    extra_in_key: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0 <= self.tonic < 12:
            raise InvalidInputError(f"tonic {self.tonic} outside [0, 12)")
        if self.mode not in ("major", "minor"):
            raise InvalidInputError(f"mode must be major or minor, got {self.mode!r}")
        object.__setattr__(self, "extra_in_key",
                           frozenset(int(pc) % 12 for pc in self.extra_in_key))

    @staticmethod
    def parse(symbol: str) -> "KeySignature":
        """Parse "D" (major) or "Bm" / "Ebm" (minor)."""
        text = symbol.strip()
        if text.endswith("m") and not text.endswith("dim"):
            return KeySignature(parse_pitch_class(text[:-1]), "minor")
        return KeySignature(parse_pitch_class(text), "major")

    @property
    def symbol(self) -> str:
        return PC_NAMES[self.tonic] + ("m" if self.mode == "minor" else "")

    def in_key_pitch_classes(self) -> frozenset[int]:
        base = MAJOR_SCALE if self.mode == "major" else MINOR_IN_KEY
        shifted = frozenset((self.tonic + d) % 12 for d in base)
        return shifted | self.extra_in_key


def out_of_key_pitch_classes(key: KeySignature) -> frozenset[int]:
    """Pitch classes outside the key's scale (major: 5 classes; minor: the
    natural-minor complement minus the leading tone)."""
    return frozenset(range(12)) - key.in_key_pitch_classes()


@dataclass(frozen=True)
class Chord:
    root: int
    quality: str

    def __post_init__(self):
        if not 0 <= self.root < 12:
            raise InvalidInputError(f"chord root {self.root} outside [0, 12)")
        if self.quality not in CHORD_TEMPLATES:
            raise InvalidInputError(f"unknown chord quality {self.quality!r}")

    @staticmethod
    def parse(symbol: str) -> "Chord":
        text = symbol.strip()
        m = re.match(r"([A-Ga-g])([#b]?)", text)
        if not m:
            raise InvalidInputError(f"bad chord symbol {symbol!r}")
        root = parse_pitch_class(m.group(0))
        rest = text[m.end():]
        for suffix, quality in _SUFFIX_QUALITY:
            if rest == suffix:
                return Chord(root, quality)
        raise InvalidInputError(f"bad chord symbol {symbol!r}")

    @property
    def symbol(self) -> str:
        return PC_NAMES[self.root] + _QUALITY_SUFFIX[self.quality]

    def pitch_classes(self) -> frozenset[int]:
        return frozenset((self.root + iv) % 12 for iv in CHORD_TEMPLATES[self.quality])


def chord_pitch_classes(chord: Chord) -> frozenset[int]:
    return chord.pitch_classes()


def _pc_row_mask(pcs: Iterable[int]) -> np.ndarray:
    """(128,) bool: pitches whose class is in ``pcs``."""
    table = np.zeros(12, dtype=bool)
    for pc in pcs:
        table[pc % 12] = True
    return table[_PC_OF_PITCH]


@dataclass(frozen=True)
class ChordProgression:
    """One chord per 16th step, full coverage of [0, L)."""

    chords: tuple[Chord, ...]

    def __post_init__(self):
        if len(self.chords) == 0:
            raise InvalidInputError("ChordProgression must cover at least one step")
        object.__setattr__(self, "chords", tuple(self.chords))

    @property
    def length(self) -> int:
        return len(self.chords)

    def __getitem__(self, l: int) -> Chord:
        return self.chords[l]

    @staticmethod
    def from_symbols(symbols: Sequence[str], steps_per_symbol: int = 1) -> "ChordProgression":
        if steps_per_symbol < 1:
            raise InvalidInputError("steps_per_symbol must be >= 1")
        chords: list[Chord] = []
        for sym in symbols:
            chords.extend([Chord.parse(sym)] * steps_per_symbol)
        return ChordProgression(tuple(chords))

    @staticmethod
    def from_json(entries: Sequence[dict], length: int) -> "ChordProgression":
        """Change-point form: [{"step":0,"chord":"C"}, ...]; each chord holds
        until the next change. The first entry must sit at step 0."""
        items = sorted(entries, key=lambda e: e["step"])
        if not items or items[0]["step"] != 0:
            raise InvalidInputError("progression JSON must start at step 0")
        chords: list[Chord] = []
        for i, entry in enumerate(items):
            start = int(entry["step"])
            end = int(items[i + 1]["step"]) if i + 1 < len(items) else length
            if start < 0 or end > length or end <= start:
                raise InvalidInputError(f"bad progression segment [{start}, {end})")
            chords.extend([Chord.parse(entry["chord"])] * (end - start))
        return ChordProgression(tuple(chords))

    def to_json(self) -> list[dict]:
        entries = []
        for l, chord in enumerate(self.chords):
            if l == 0 or chord != self.chords[l - 1]:
                entries.append({"step": l, "chord": chord.symbol})
        return entries

    def symbols(self) -> list[str]:
        return [c.symbol for c in self.chords]

    def pitch_mask(self) -> np.ndarray:
        """(L, 128) bool: cell is True iff pitch-class(h) is a chord tone at l."""
        out = np.zeros((self.length, PITCHES), dtype=bool)
        cache: dict[Chord, np.ndarray] = {}
        for l, chord in enumerate(self.chords):
            row = cache.get(chord)
            if row is None:
                row = cache[chord] = _pc_row_mask(chord.pitch_classes())
            out[l] = row
        return out


@dataclass(frozen=True)
class RhythmPattern:
    """Set of steps at which onsets occur, within a fixed length."""

    onsets: frozenset[int]
    length: int

    def __post_init__(self):
        onsets = frozenset(int(s) for s in self.onsets)
        if self.length < 1:
            raise InvalidInputError("RhythmPattern length must be >= 1")
        if any(s < 0 or s >= self.length for s in onsets):
            raise InvalidInputError("rhythm onset outside [0, L)")
        object.__setattr__(self, "onsets", onsets)

    def onset_mask(self, length: Optional[int] = None) -> np.ndarray:
        length = self.length if length is None else length
        if length != self.length:
            raise LengthMismatchError(
                f"rhythm pattern has length {self.length}, asked for {length}")
        mask = np.zeros(length, dtype=bool)
        for s in self.onsets:
            mask[s] = True
        return mask

    @staticmethod
    def empty(length: int) -> "RhythmPattern":
        return RhythmPattern(frozenset(), length)


@dataclass(frozen=True)
class KeySequence:
    """Per-step key signatures, full coverage of [0, L)."""

    keys: tuple[KeySignature, ...]

    def __post_init__(self):
        if len(self.keys) == 0:
            raise InvalidInputError("KeySequence must cover at least one step")
        object.__setattr__(self, "keys", tuple(self.keys))

    @property
    def length(self) -> int:
        return len(self.keys)

    def __getitem__(self, l: int) -> KeySignature:
        return self.keys[l]

    @staticmethod
    def constant(key: KeySignature, length: int) -> "KeySequence":
        return KeySequence((key,) * length)

    def out_of_key_grid(self) -> np.ndarray:
        """(L, 128) bool: True where pitch-class(h) is out of key at step l."""
        out = np.zeros((self.length, PITCHES), dtype=bool)
        cache: dict[KeySignature, np.ndarray] = {}
        for l, key in enumerate(self.keys):
            row = cache.get(key)
            if row is None:
                row = cache[key] = _pc_row_mask(out_of_key_pitch_classes(key))
            out[l] = row
        return out


# per-column rhythm constraint codes (stored as arrays for the kernels)
R_FREE = 0
R_EXACTLY = 1
R_AT_LEAST = 2
R_NONE = 3

_KIND_CODES = {"free": R_FREE, "exactly": R_EXACTLY, "at_least": R_AT_LEAST,
               "none": R_NONE}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class ColumnSpec:
    """Rhythm rule for one column: free, exactly(n), at_least(n), or none."""

    kind: str
    n: int = 1

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise InvalidInputError(f"unknown rhythm constraint kind {self.kind!r}")
        if self.kind in ("exactly", "at_least") and self.n < 1:
            raise InvalidInputError(f"{self.kind} constraint needs n >= 1")


@dataclass(frozen=True)
class ConstraintMask:
    """Out-of-key grid plus per-column onset-count rules.

    ``key_mask[l, h]`` is True where the pitch is out of key (the harmonic
    clamp targets those cells on both channels). ``rhythm_kinds``/``rhythm_n``
    carry one rule per column for the onset channel. When
    ``restrict_to_in_key`` is set, rhythm-forced onsets may only land on
    in-key pitches (joint control).
    """

    key_mask: np.ndarray
    rhythm_kinds: np.ndarray
    rhythm_n: np.ndarray
    restrict_to_in_key: bool = True

    def __post_init__(self):
        km = np.asarray(self.key_mask, dtype=bool)
        if km.ndim != 2 or km.shape[1] != PITCHES:
            raise InvalidInputError(f"key_mask must be (L, 128), got {km.shape}")
        kinds = np.asarray(self.rhythm_kinds, dtype=np.int8)
        ns = np.asarray(self.rhythm_n, dtype=np.int32)
        if kinds.shape != (km.shape[0],) or ns.shape != (km.shape[0],):
            raise LengthMismatchError("rhythm spec arrays must have length L")
        if not np.isin(kinds, list(_CODE_KINDS)).all():
            raise InvalidInputError("unknown rhythm constraint code")
        counted = np.isin(kinds, (R_EXACTLY, R_AT_LEAST))
        if (ns[counted] < 1).any():
            raise InvalidInputError("exactly/at_least constraints need n >= 1")
        for name, arr in (("key_mask", km), ("rhythm_kinds", kinds), ("rhythm_n", ns)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def length(self) -> int:
        return self.key_mask.shape[0]

    def column_spec(self, l: int) -> ColumnSpec:
        return ColumnSpec(_CODE_KINDS[int(self.rhythm_kinds[l])], int(self.rhythm_n[l]))

    def has_rhythm_rules(self) -> bool:
        return bool((self.rhythm_kinds != R_FREE).any())

    def has_key_rules(self) -> bool:
        return bool(self.key_mask.any())

    def zero_cells(self) -> np.ndarray:
        """(2, L, 128) bool grid of cells the constraints force to binarize to 0:
        out-of-key cells on both channels, plus whole no-onset columns on the
        onset channel."""
        forced = np.zeros((CHANNELS, self.length, PITCHES), dtype=bool)
        forced[:] = self.key_mask[None, :, :]
        forced[ONSET, self.rhythm_kinds == R_NONE, :] = True
        return forced


def build_constraint_mask(keys: KeySequence,
                          rhythm_ctrl: Optional[Sequence[ColumnSpec]] = None,
                          restrict_to_in_key: bool = True) -> ConstraintMask:
    length = keys.length
    kinds = np.full(length, R_FREE, dtype=np.int8)
    ns = np.ones(length, dtype=np.int32)
    if rhythm_ctrl is not None:
        if len(rhythm_ctrl) != length:
            raise LengthMismatchError(
                f"rhythm spec covers {len(rhythm_ctrl)} columns, keys cover {length}")
        for l, spec in enumerate(rhythm_ctrl):
            kinds[l] = _KIND_CODES[spec.kind]
            ns[l] = spec.n
    return ConstraintMask(keys.out_of_key_grid(), kinds, ns, restrict_to_in_key)


def rhythm_controls_from_pattern(pattern: str, length: int
                                 ) -> tuple[RhythmPattern, tuple[ColumnSpec, ...]]:
    """Expand the CLI/service pattern syntax into a rhythm condition plus
    per-column rules: 'x' = onset required (at_least 1), '.' = unconstrained,
    'o' = no onset. A pattern shorter than L tiles if it divides L evenly."""
    if not pattern or any(ch not in "x.o" for ch in pattern):
        raise InvalidInputError(
            f"rhythm pattern {pattern!r} must be nonempty over 'x', '.', 'o'")
    if length % len(pattern) != 0:
        raise InvalidInputError(
            f"pattern length {len(pattern)} does not divide roll length {length}")
    full = pattern * (length // len(pattern))
    onsets = frozenset(l for l, ch in enumerate(full) if ch == "x")
    specs = tuple(ColumnSpec("at_least", 1) if ch == "x"
                  else ColumnSpec("none") if ch == "o"
                  else ColumnSpec("free")
                  for ch in full)
    return RhythmPattern(onsets, length), specs


# ---------------------------------------------------------------------------
# key derivation and chord recognition
# ---------------------------------------------------------------------------

def _all_keys() -> list[KeySignature]:
    return [KeySignature(t, m) for m in ("major", "minor") for t in range(12)]


def _fifths_distance(a: KeySignature, b: KeySignature) -> int:
    # positions on the circle of fifths; minor keys use their tonic directly
    pa, pb = (a.tonic * 7) % 12, (b.tonic * 7) % 12
    d = (pa - pb) % 12
    return min(d, 12 - d)


def derive_keys_from_chords(chords: ChordProgression, window: int = 16) -> KeySequence:
    """Per-step key whose scale covers the most chord-tone mass in a centered
    window. Ties break toward the smallest circle-of-fifths move from the
    previous step's key, then the lower tonic, then major mode."""
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    length = chords.length
    candidates = _all_keys()
    in_key_tables = [key.in_key_pitch_classes() for key in candidates]

    # chord-tone pitch-class counts per step
    counts = np.zeros((length, 12), dtype=np.int64)
    for l in range(length):
        for pc in chords[l].pitch_classes():
            counts[l, pc] += 1

    keys: list[KeySignature] = []
    prev: Optional[KeySignature] = None
    for l in range(length):
        lo = max(0, l - window // 2)
        hi = min(length, lo + window)
        lo = max(0, hi - window)
        window_counts = counts[lo:hi].sum(axis=0)
        best = None
        for key, in_key in zip(candidates, in_key_tables):
            coverage = int(sum(window_counts[pc] for pc in in_key))
            tie = (0 if prev is None else _fifths_distance(key, prev),
                   key.tonic, 0 if key.mode == "major" else 1)
            rank = (-coverage, *tie)
            if best is None or rank < best[0]:
                best = (rank, key)
        keys.append(best[1])
        prev = best[1]
    return KeySequence(tuple(keys))


def recognize_chords(roll: PianoRoll, granularity: int = 16) -> ChordProgression:
    """Template-matching recognition over fixed windows.

    Scores each (root, quality) by matched duration-weighted pitch-class mass
    minus unmatched mass; ties break by template priority then lower root.
    Empty windows carry the previous chord (C major before any content).
    """
    if granularity < 1 or roll.length % granularity != 0:
        raise InvalidInputError(
            f"granularity {granularity} must divide roll length {roll.length}")
    activity = roll.onsets() | roll.sustains()          # (L, 128)
    priority = {q: i for i, q in enumerate(TEMPLATE_PRIORITY)}

    chords: list[Chord] = []
    previous = Chord(0, "maj")
    for start in range(0, roll.length, granularity):
        cells = activity[start:start + granularity]
        mass = np.zeros(12)
        np.add.at(mass, _PC_OF_PITCH, cells.sum(axis=0).astype(np.float64))
        total = mass.sum()
        if total == 0:
            chosen = previous
        else:
            best = None
            for quality, template in CHORD_TEMPLATES.items():
                for root in range(12):
                    matched = sum(mass[(root + iv) % 12] for iv in template)
                    score = matched - (total - matched)
                    rank = (-score, priority[quality], root)
                    if best is None or rank < best[0]:
                        best = (rank, Chord(root, quality))
            chosen = best[1]
        chords.extend([chosen] * granularity)
        previous = chosen
    return ChordProgression(tuple(chords))


def out_of_key_chord_columns(chords: ChordProgression, keys: KeySequence) -> list[int]:
    """Steps where the active chord contains out-of-key pitch classes; the
    sampler warns on these (keys are authoritative, the clamp wins)."""
    if chords.length != keys.length:
        raise LengthMismatchError(
            f"chords cover {chords.length} steps, keys cover {keys.length}")
    bad = []
    for l in range(chords.length):
        if chords[l].pitch_classes() & out_of_key_pitch_classes(keys[l]):
            bad.append(l)
    return bad
