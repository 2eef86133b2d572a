"""Piano-roll data model.

A roll is a 2 x L x 128 grid: channel 0 marks note onsets, channel 1 marks
sustained continuations, L counts 16th-note steps, and the 128 rows are MIDI
pitches. Four value domains share the shape:

* ``PianoRoll``     — binary cells, the discrete music object.
* ``LatentRoll``    — real cells, the diffusion state.
* ``ConditionRoll`` — chord/rhythm conditioning planes, either the {0,1}
  chord+rhythm form or the {-2,-1} chord-only form.
* ``ModelInput``    — the 6-channel concatenation [latent | condition | melody]
  fed to a denoiser.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from ftg.errors import InvalidInputError, LengthMismatchError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, annotation only
    from ftg.theory import ChordProgression, ConstraintMask, RhythmPattern

CHANNELS = 2
PITCHES = 128
ONSET = 0
SUSTAIN = 1
#: latent + condition + melody channels of a denoiser input
MODEL_CHANNELS = 6

#: magic for the compact binary fixture format
ROLL_MAGIC = b"FTGR"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _check_shape(data: np.ndarray, what: str) -> None:
    if data.ndim != 3 or data.shape[0] != CHANNELS or data.shape[2] != PITCHES:
        raise InvalidInputError(
            f"{what} must have shape (2, L, 128), got {data.shape}")
    if data.shape[1] < 1:
        raise InvalidInputError(f"{what} must have L >= 1")


@dataclass(frozen=True)
class PianoRoll:
    """Binary onset/sustain grid. Cells are exactly 0 or 1."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        _check_shape(data, "PianoRoll")
        if not np.isin(data, (0, 1)).all():
            raise InvalidInputError("PianoRoll cells must be 0 or 1")
        object.__setattr__(self, "data", _freeze(data.astype(np.uint8)))

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def onsets(self) -> np.ndarray:
        """Boolean (L, 128) view of the onset channel."""
        return self.data[ONSET].astype(bool)

    def sustains(self) -> np.ndarray:
        return self.data[SUSTAIN].astype(bool)

    @staticmethod
    def zeros(length: int) -> "PianoRoll":
        return PianoRoll(np.zeros((CHANNELS, length, PITCHES), dtype=np.uint8))


@dataclass(frozen=True)
class LatentRoll:
    """Real-valued diffusion state with the roll shape. All cells finite."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        _check_shape(data, "LatentRoll")
        if not np.isfinite(data).all():
            raise InvalidInputError("LatentRoll cells must be finite")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def length(self) -> int:
        return self.data.shape[1]


# value sets for the two condition forms
_FORM_VALUES = {"cr": (0.0, 1.0), "c": (-2.0, -1.0)}


@dataclass(frozen=True)
class ConditionRoll:
    """Conditioning planes; ``form`` is "cr" (chord+rhythm) or "c" (chord only)."""

    data: np.ndarray
    form: str

    def __post_init__(self):
        if self.form not in _FORM_VALUES:
            raise InvalidInputError(f"unknown condition form {self.form!r}")
        data = np.asarray(self.data, dtype=np.float64)
        _check_shape(data, "ConditionRoll")
        if not np.isin(data, _FORM_VALUES[self.form]).all():
            raise InvalidInputError(
                f"ConditionRoll values must lie in {_FORM_VALUES[self.form]} "
                f"for form {self.form!r}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ModelInput:
    """6 x L x 128 denoiser input: [0..1] latent, [2..3] condition, [4..5] melody."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] != MODEL_CHANNELS or data.shape[2] != PITCHES:
            raise InvalidInputError(
                f"ModelInput must have shape (6, L, 128), got {data.shape}")
        if not np.isfinite(data).all():
            raise InvalidInputError("ModelInput cells must be finite")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def latent(self) -> np.ndarray:
        return self.data[0:2]

    def condition(self) -> np.ndarray:
        return self.data[2:4]

    def melody(self) -> np.ndarray:
        return self.data[4:6]


def binarize(latent: LatentRoll, mask: Optional["ConstraintMask"] = None) -> PianoRoll:
    """Threshold a latent roll to a binary one.

    A cell becomes 1 iff its value >= 1/2. When a constraint mask is given,
    positions the mask forces to zero (out-of-key cells on both channels,
    no-onset columns on the onset channel) resolve the boundary the other
    way: they stay 0 unless the value is strictly > 1/2. Corrected samplers
    keep such cells <= 1/2 - kappa, so the override only matters for raw,
    uncorrected latents.
    """
    values = latent.data
    out = (values >= 0.5).astype(np.uint8)
    if mask is not None:
        if mask.length != latent.length:
            raise LengthMismatchError(
                f"mask length {mask.length} != latent length {latent.length}")
        forced = mask.zero_cells()
        out[forced] = (values[forced] > 0.5).astype(np.uint8)
    return PianoRoll(out)


def build_condition_cr(chords: "ChordProgression", rhythm: "RhythmPattern",
                       length: Optional[int] = None) -> ConditionRoll:
    """Chord+rhythm condition: channel 0 is 1 at (l, h) iff l is a rhythm onset
    step and pitch-class(h) is a chord tone at l; channel 1 is 1 iff the pitch
    class is a chord tone and l is not an onset step."""
    length = chords.length if length is None else length
    if chords.length < length:
        raise LengthMismatchError(
            f"chord progression covers {chords.length} steps, need {length}")
    member = chords.pitch_mask()[:length]          # (L, 128) chord-tone cells
    onset_cols = rhythm.onset_mask(length)[:, None]  # (L, 1)
    data = np.zeros((CHANNELS, length, PITCHES))
    data[ONSET] = (member & onset_cols).astype(np.float64)
    data[SUSTAIN] = (member & ~onset_cols).astype(np.float64)
    return ConditionRoll(data, form="cr")


def build_condition_c(chords: "ChordProgression",
                      length: Optional[int] = None) -> ConditionRoll:
    """Chord-only condition: both channels are -2 at chord-tone cells, -1 elsewhere."""
    length = chords.length if length is None else length
    if chords.length < length:
        raise LengthMismatchError(
            f"chord progression covers {chords.length} steps, need {length}")
    member = chords.pitch_mask()[:length]
    plane = np.where(member, -2.0, -1.0)
    data = np.stack([plane, plane])
    return ConditionRoll(data, form="c")


def concat_model_input(x_t: LatentRoll, cond: ConditionRoll,
                       melody: Optional[PianoRoll] = None) -> ModelInput:
    """Stack latent, condition, and melody (zeros when absent) into 6 channels."""
    if cond.length != x_t.length:
        raise LengthMismatchError(
            f"condition length {cond.length} != latent length {x_t.length}")
    if melody is None:
        mel = np.zeros((CHANNELS, x_t.length, PITCHES))
    else:
        if melody.length != x_t.length:
            raise LengthMismatchError(
                f"melody length {melody.length} != latent length {x_t.length}")
        mel = melody.data.astype(np.float64)
    return ModelInput(np.concatenate([x_t.data, cond.data, mel], axis=0))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

AnyRoll = Union[PianoRoll, LatentRoll]


def roll_to_json(roll: AnyRoll) -> dict:
    """Canonical JSON form: {"channels":2,"length":L,"pitches":128,"data":[...]}
    with the flat list in row-major (channel, l, h) order."""
    data = roll.data
    flat = data.reshape(-1)
    if isinstance(roll, PianoRoll):
        values = [int(v) for v in flat]
    else:
        values = [float(v) for v in flat]
    return {"channels": CHANNELS, "length": roll.length, "pitches": PITCHES,
            "data": values}


def _array_from_json(obj: dict) -> np.ndarray:
    try:
        channels, length, pitches = obj["channels"], obj["length"], obj["pitches"]
        data = obj["data"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"roll JSON missing field: {exc}") from exc
    if channels != CHANNELS or pitches != PITCHES:
        raise InvalidInputError(
            f"roll JSON must have channels=2, pitches=128; got {channels}, {pitches}")
    arr = np.asarray(data, dtype=np.float64)
    if arr.size != channels * length * pitches:
        raise InvalidInputError(
            f"roll JSON data has {arr.size} cells, expected {channels * length * pitches}")
    return arr.reshape(CHANNELS, length, PITCHES)


def piano_roll_from_json(obj: dict) -> PianoRoll:
    return PianoRoll(_array_from_json(obj))


def latent_roll_from_json(obj: dict) -> LatentRoll:
    return LatentRoll(_array_from_json(obj))


def roll_to_json_str(roll: AnyRoll) -> str:
    return json.dumps(roll_to_json(roll), separators=(",", ":"))


def save_roll_bytes(roll: AnyRoll) -> bytes:
    """Compact binary fixture: magic "FTGR", u32 channels/length/pitches
    (little-endian), then the payload — bit-packed for binary rolls, float32
    little-endian for latent rolls. The payload kind is recovered from its
    byte count (4n vs ceil(n/8) can never collide)."""
    head = ROLL_MAGIC + struct.pack("<III", CHANNELS, roll.length, PITCHES)
    if isinstance(roll, PianoRoll):
        payload = np.packbits(roll.data.reshape(-1)).tobytes()
    else:
        payload = roll.data.astype("<f4").tobytes()
    return head + payload


def load_roll_bytes(blob: bytes) -> AnyRoll:
    if len(blob) < 16 or blob[:4] != ROLL_MAGIC:
        raise InvalidInputError("not a roll fixture: bad magic")
    channels, length, pitches = struct.unpack("<III", blob[4:16])
    if channels != CHANNELS or pitches != PITCHES:
        raise InvalidInputError(
            f"roll fixture must have channels=2, pitches=128; got {channels}, {pitches}")
    n = channels * length * pitches
    payload = blob[16:]
    if len(payload) == 4 * n:
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(
            CHANNELS, length, PITCHES)
        return LatentRoll(arr)
    if len(payload) == (n + 7) // 8:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n)
        return PianoRoll(bits.reshape(CHANNELS, length, PITCHES))
    raise InvalidInputError(
        f"roll fixture payload has {len(payload)} bytes; expected {4 * n} "
        f"(float32) or {(n + 7) // 8} (bit-packed)")
