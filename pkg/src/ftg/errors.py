"""Exception types shared across the package."""

from __future__ import annotations


class InvalidInputError(ValueError):
    """Input violates a documented precondition (shape, dtype, finiteness)."""


class LengthMismatchError(InvalidInputError):
    """Sequence lengths disagree (progression vs roll vs mask)."""


class ScheduleError(ValueError):
    """Noise-schedule parameters out of range or internally inconsistent."""


class InfeasibleConstraintError(ValueError):
    """A rhythm constraint demands more onsets than there are candidate pitches.

    Carries the offending column indices so callers (CLI exit codes, the HTTP
    409 body) can report exactly where the request is impossible.
    """

    def __init__(self, message: str, columns: list[int], required: int | None = None,
                 candidates: int | None = None):
        super().__init__(message)
        self.columns = list(columns)
        self.required = required
        self.candidates = candidates


class MidiParseError(ValueError):
    """Malformed standard MIDI file; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedMeterError(ValueError):
    """Piece is not in 4/4; rejected rather than mis-quantized."""


class MetricError(ValueError):
    """Metric precondition violated (unnormalized histogram, zero segments)."""


class CheckpointError(ValueError):
    """Checkpoint file malformed or of an unsupported version."""
