"""Standard MIDI File (format 0/1) parsing, emission, and 16th-note
quantization.

The parser honors running status, skips unknown meta/sysex events, and
reports malformed input with the byte offset. Quantization snaps onsets to
the nearest 16th-note grid point, fills durations with sustain cells, and
rejects anything not in 4/4. Emission writes a two-track type-1 file
(melody, accompaniment) on a fixed 480-ticks-per-quarter grid; parsing an
emitted file recovers the rolls exactly for onset-rooted content.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ftg.errors import MidiParseError, UnsupportedMeterError
from ftg.metrics import note_durations
from ftg.pianoroll import CHANNELS, PITCHES, PianoRoll

TICKS_PER_QUARTER = 480
STEPS_PER_QUARTER = 4
STEPS_PER_MEASURE = 16
DEFAULT_TEMPO_BPM = 120
DEFAULT_VELOCITY = 80
MELODY_TRACK_NAME = "MELODY"
ACCOMPANIMENT_TRACK_NAME = "PIANO"


@dataclass(frozen=True)
class MidiNote:
    onset_tick: int
    duration_ticks: int
    pitch: int
    velocity: int


@dataclass
class MidiTrack:
    name: str = ""
    notes: list[MidiNote] = field(default_factory=list)
    end_tick: int = 0


@dataclass
class MidiDocument:
    ticks_per_quarter: int
    tempo_events: list[tuple[int, int]] = field(default_factory=list)
    time_signatures: list[tuple[int, int, int]] = field(default_factory=list)
    tracks: list[MidiTrack] = field(default_factory=list)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def fail(self, message: str):
        raise MidiParseError(message, offset=self.pos)

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            self.fail(f"truncated: wanted {n} bytes, "
                      f"{len(self.blob) - self.pos} left")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        b = self.take(2)
        return (b[0] << 8) | b[1]

    def u32(self) -> int:
        b = self.take(4)
        return (b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3]

    def vlq(self) -> int:
        value = 0
        for i in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        self.fail("variable-length quantity longer than 4 bytes")


def _parse_track(reader: _Reader, length: int, doc: MidiDocument) -> MidiTrack:
    track = MidiTrack()
    end = reader.pos + length
    tick = 0
    status: Optional[int] = None
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def close_note(channel: int, pitch: int, off_tick: int):
        stack = open_notes.get((channel, pitch))
        if stack:
            on_tick, velocity = stack.pop(0)
            track.notes.append(MidiNote(on_tick, off_tick - on_tick, pitch, velocity))

    while reader.pos < end:
        tick += reader.vlq()
        byte = reader.u8()
        if byte < 0x80:
            if status is None:
                reader.fail(f"data byte 0x{byte:02x} with no running status")
            reader.pos -= 1
            byte = status
        if byte == 0xFF:
            meta = reader.u8()
            payload = reader.take(reader.vlq())
            if meta == 0x2F:
                track.end_tick = tick
                reader.pos = end
                break
            if meta == 0x03:
                track.name = payload.decode("latin-1")
            elif meta == 0x51 and len(payload) == 3:
                usec = (payload[0] << 16) | (payload[1] << 8) | payload[2]
                doc.tempo_events.append((tick, usec))
            elif meta == 0x58 and len(payload) >= 2:
                doc.time_signatures.append((tick, payload[0], 1 << payload[1]))
            status = None
            continue
        if byte in (0xF0, 0xF7):
            reader.take(reader.vlq())
            status = None
            continue
        status = byte
        kind, channel = byte & 0xF0, byte & 0x0F
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            d1, d2 = reader.u8(), reader.u8()
        elif kind in (0xC0, 0xD0):
            d1, d2 = reader.u8(), 0
        else:
            reader.fail(f"unknown status byte 0x{byte:02x}")
        if kind == 0x90 and d2 > 0:
            open_notes.setdefault((channel, d1), []).append((tick, d2))
        elif kind == 0x80 or (kind == 0x90 and d2 == 0):
            close_note(channel, d1, tick)

    track.end_tick = max(track.end_tick, tick)
    for (channel, pitch), stack in open_notes.items():
        for on_tick, velocity in stack:
            track.notes.append(
                MidiNote(on_tick, track.end_tick - on_tick, pitch, velocity))
    track.notes.sort(key=lambda n: (n.onset_tick, n.pitch))
    return track


def parse_midi(blob: bytes) -> MidiDocument:
    reader = _Reader(blob)
    if reader.take(4) != b"MThd":
        reader.pos = 0
        reader.fail("not a standard MIDI file: bad header magic")
    header_len = reader.u32()
    if header_len < 6:
        reader.fail(f"MThd length {header_len} < 6")
    fmt = reader.u16()
    ntrks = reader.u16()
    division = reader.u16()
    reader.take(header_len - 6)
    if fmt not in (0, 1):
        reader.fail(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        reader.fail("SMPTE time division is unsupported")
    if division == 0:
        reader.fail("ticks-per-quarter must be > 0")

    doc = MidiDocument(ticks_per_quarter=division)
    while len(doc.tracks) < ntrks and reader.pos < len(reader.blob):
        chunk = reader.take(4)
        length = reader.u32()
        if chunk != b"MTrk":
            reader.take(length)      # skip alien chunks per the SMF spec
            continue
        if reader.pos + length > len(reader.blob):
            reader.fail(f"track chunk of {length} bytes overruns the file")
        doc.tracks.append(_parse_track(reader, length, doc))
    if len(doc.tracks) < ntrks:
        reader.fail(f"header promised {ntrks} tracks, found {len(doc.tracks)}")
    doc.tempo_events.sort()
    doc.time_signatures.sort()
    return doc


def quantize(doc: MidiDocument) -> list[tuple[str, PianoRoll]]:
    """One onset/sustain roll per track on the 16th-note grid, padded to
    whole measures (all tracks share the longest length)."""
    for _, num, den in doc.time_signatures:
        if (num, den) != (4, 4):
            raise UnsupportedMeterError(
                f"only 4/4 input is supported, found {num}/{den}")
    step_ticks = doc.ticks_per_quarter / STEPS_PER_QUARTER
    measure_ticks = doc.ticks_per_quarter * 4

    max_tick = 0
    grids = []
    for track in doc.tracks:
        cells = []
        for note in track.notes:
            on = int(np.floor(note.onset_tick / step_ticks + 0.5))
            off = int(np.floor((note.onset_tick + note.duration_ticks)
                               / step_ticks + 0.5))
            cells.append((on, max(1, off - on), note.pitch))
        grids.append(cells)
        max_tick = max(max_tick, track.end_tick,
                       max((n.onset_tick + n.duration_ticks
                            for n in track.notes), default=0))
    measures = max(1, int(np.ceil(max_tick / measure_ticks))) if max_tick else 1
    length = measures * STEPS_PER_MEASURE

    out = []
    for track, cells in zip(doc.tracks, grids):
        data = np.zeros((CHANNELS, length, PITCHES), dtype=np.uint8)
        for on, dur, pitch in cells:
            if on >= length:
                continue
            data[0, on, pitch] = 1
            data[1, on + 1:min(on + dur, length), pitch] = 1
        out.append((track.name, PianoRoll(data)))
    return out


def select_tracks(rolls: list[tuple[str, PianoRoll]]
                  ) -> tuple[Optional[PianoRoll], Optional[PianoRoll]]:
    """(melody, accompaniment) by track name, falling back to track order."""
    if not rolls:
        return None, None
    melody = accomp = None
    for name, roll in rolls:
        upper = name.upper()
        if melody is None and MELODY_TRACK_NAME in upper:
            melody = roll
        elif accomp is None and ACCOMPANIMENT_TRACK_NAME in upper:
            accomp = roll
    if melody is None and accomp is None:
        if len(rolls) == 1:
            return None, rolls[0][1]
        return rolls[0][1], rolls[1][1]
    if accomp is None:
        others = [r for _, r in rolls if r is not melody]
        accomp = others[0] if others else None
    if melody is None and len(rolls) > 1:
        others = [r for _, r in rolls if r is not accomp]
        melody = others[0] if others else None
    return melody, accomp


def segment_4bars(roll: PianoRoll) -> list[PianoRoll]:
    """Non-overlapping 64-step windows; a trailing partial window is dropped."""
    window = 4 * STEPS_PER_MEASURE
    return [PianoRoll(roll.data[:, s:s + window])
            for s in range(0, roll.length - window + 1, window)]


def _vlq_bytes(value: int) -> bytes:
    if value < 0:
        raise MidiParseError(f"cannot encode negative delta {value}")
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunks))


def _meta(kind: int, payload: bytes) -> bytes:
    return bytes([0xFF, kind]) + _vlq_bytes(len(payload)) + payload


def _track_chunk(events: list[tuple[int, int, bytes]], end_tick: int) -> bytes:
    """events: (tick, sort-order, message bytes); note-offs sort before
    note-ons at the same tick so zero-gap repeats stay unambiguous."""
    events = sorted(events, key=lambda e: (e[0], e[1]))
    body = bytearray()
    tick = 0
    for ev_tick, _, message in events:
        body += _vlq_bytes(ev_tick - tick)
        body += message
        tick = ev_tick
    body += _vlq_bytes(max(0, end_tick - tick))
    body += _meta(0x2F, b"")
    return b"MTrk" + len(body).to_bytes(4, "big") + bytes(body)


def emit_midi(melody: Optional[PianoRoll], accompaniment: PianoRoll,
              tempo: int = DEFAULT_TEMPO_BPM) -> bytes:
    """Two-track type-1 SMF on the 16th grid with fixed velocity."""
    if tempo < 1:
        raise MidiParseError(f"tempo must be >= 1 BPM, got {tempo}")
    melody = melody if melody is not None else PianoRoll.zeros(accompaniment.length)
    length = max(melody.length, accompaniment.length)
    step = TICKS_PER_QUARTER // STEPS_PER_QUARTER
    end_tick = length * step

    def note_events(roll: PianoRoll, channel: int) -> list[tuple[int, int, bytes]]:
        events = []
        for l, h, d in note_durations(roll):
            events.append((l * step, 1,
                           bytes([0x90 | channel, h, DEFAULT_VELOCITY])))
            events.append(((l + d) * step, 0, bytes([0x80 | channel, h, 0])))
        return events

    usec_per_quarter = round(60_000_000 / tempo)
    melody_events = [
        (0, -3, _meta(0x51, usec_per_quarter.to_bytes(3, "big"))),
        (0, -2, _meta(0x58, bytes([4, 2, 24, 8]))),
        (0, -1, _meta(0x03, MELODY_TRACK_NAME.encode("ascii"))),
    ] + note_events(melody, 0)
    accomp_events = [
        (0, -1, _meta(0x03, ACCOMPANIMENT_TRACK_NAME.encode("ascii"))),
    ] + note_events(accompaniment, 1)

    header = b"MThd" + (6).to_bytes(4, "big") + \
        (1).to_bytes(2, "big") + (2).to_bytes(2, "big") + \
        TICKS_PER_QUARTER.to_bytes(2, "big")
    return header + _track_chunk(melody_events, end_tick) + \
        _track_chunk(accomp_events, end_tick)
