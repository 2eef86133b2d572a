/**
 * Browser-audio playback of the combined rolls.
 *
 * Note extraction mirrors the engine's rule: a note starts at an onset cell
 * and runs through following sustain cells until one is missing or a new
 * onset begins. Scheduling is done against an injectable AudioContext-shaped
 * interface so tests drive a fake clock; durations are pure arithmetic
 * (one step = a 16th note, so 64 steps at 120 BPM span 8.0 s).
 */

import { RollJson, rollCell, PITCHES } from "./schema.js";
import { cellOf } from "./state.js";
import type { Layer } from "./overlay.js";

export interface NoteEvent {
  step: number;
  /** In steps; counts the onset step plus trailing sustain cells. */
  duration: number;
  pitch: number;
  layer: Layer;
}

export function notesFromRoll(roll: RollJson, layer: Layer): NoteEvent[] {
  const notes: NoteEvent[] = [];
  for (let step = 0; step < roll.length; step++) {
    for (let pitch = 0; pitch < PITCHES; pitch++) {
      if (rollCell(roll, 0, step, pitch) === 0) continue;
      let duration = 1;
      while (
        step + duration < roll.length &&
        rollCell(roll, 1, step + duration, pitch) !== 0 &&
        rollCell(roll, 0, step + duration, pitch) === 0
      ) {
        duration++;
      }
      notes.push({ step, duration, pitch, layer });
    }
  }
  return notes;
}

/** Sparse editor cells are one-step notes. */
export function notesFromCells(cells: ReadonlySet<number>): NoteEvent[] {
  return [...cells]
    .sort((a, b) => a - b)
    .map((key) => {
      const { step, pitch } = cellOf(key);
      return { step, duration: 1, pitch, layer: "melody" as Layer };
    });
}

export function stepSeconds(bpm: number): number {
  return 60 / bpm / 4; // four 16th steps per beat
}

export function rollDurationSeconds(lengthSteps: number, bpm: number): number {
  return lengthSteps * stepSeconds(bpm);
}

export function pitchToHz(pitch: number): number {
  return 440 * 2 ** ((pitch - 69) / 12);
}

// The slice of AudioContext the transport needs; the browser object
// satisfies it, and tests substitute a recording fake.
export interface AudioParamLike {
  value: number;
  setValueAtTime(value: number, time: number): unknown;
  linearRampToValueAtTime(value: number, time: number): unknown;
}

export interface OscillatorLike {
  type: string;
  frequency: AudioParamLike;
  connect(node: unknown): unknown;
  start(when: number): void;
  stop(when: number): void;
}

export interface GainLike {
  gain: AudioParamLike;
  connect(node: unknown): unknown;
}

export interface AudioContextLike {
  readonly currentTime: number;
  destination: unknown;
  createOscillator(): OscillatorLike;
  createGain(): GainLike;
}

export interface TransportStatus {
  enabled: boolean;
  /** Reason the control is disabled, or null when usable. */
  message: string | null;
}

const ATTACK = 0.005;
const RELEASE = 0.02;

/**
 * Schedules note events and tracks the playhead. At most one program plays
 * at a time; play() implicitly stops the previous one. seek(step) restarts
 * the current program from that step.
 */
export class Transport {
  private readonly ctx: AudioContextLike | null;
  private readonly bpm: number;
  private program: NoteEvent[] = [];
  private lengthSteps = 0;
  private startedAt = 0;
  private fromStep = 0;
  private playing = false;
  private live: OscillatorLike[] = [];

  constructor(ctx: AudioContextLike | null, bpm = 120) {
    this.ctx = ctx;
    this.bpm = bpm;
  }

  status(): TransportStatus {
    if (this.ctx === null) {
      return { enabled: false, message: "audio unavailable in this browser" };
    }
    return { enabled: true, message: null };
  }

  /** Full program duration in seconds (grid length, not last note end). */
  durationSeconds(): number {
    return rollDurationSeconds(this.lengthSteps, this.bpm);
  }

  isPlaying(): boolean {
    if (!this.playing) return false;
    if (this.position() >= this.lengthSteps) {
      this.fromStep = this.lengthSteps; // playhead rests at the end
      this.playing = false;
      this.live = [];
    }
    return this.playing;
  }

  /** Playhead in steps (fractional while running). */
  position(): number {
    if (!this.playing || this.ctx === null) return this.fromStep;
    const elapsed = this.ctx.currentTime - this.startedAt;
    return Math.min(this.lengthSteps, this.fromStep + elapsed / stepSeconds(this.bpm));
  }

  play(events: NoteEvent[], lengthSteps: number, fromStep = 0): void {
    if (this.ctx === null) return;
    this.stop();
    this.program = events;
    this.lengthSteps = lengthSteps;
    this.fromStep = fromStep;
    this.startedAt = this.ctx.currentTime;
    this.playing = true;

    const spb = stepSeconds(this.bpm);
    for (const note of events) {
      if (note.step < fromStep) continue; // already behind the playhead
      const at = this.startedAt + (note.step - fromStep) * spb;
      const until = at + note.duration * spb;
      this.voice(note, at, until);
    }
  }

  private voice(note: NoteEvent, at: number, until: number): void {
    const ctx = this.ctx!;
    const osc = ctx.createOscillator();
    const gain = ctx.createGain();
    osc.type = note.layer === "melody" ? "triangle" : "sine";
    osc.frequency.setValueAtTime(pitchToHz(note.pitch), at);
    gain.gain.setValueAtTime(0, at);
    gain.gain.linearRampToValueAtTime(note.layer === "melody" ? 0.3 : 0.18, at + ATTACK);
    gain.gain.setValueAtTime(note.layer === "melody" ? 0.3 : 0.18, until - RELEASE);
    gain.gain.linearRampToValueAtTime(0, until);
    osc.connect(gain);
    gain.connect(ctx.destination);
    osc.start(at);
    osc.stop(until);
    this.live.push(osc);
  }

  stop(): void {
    if (this.ctx === null || !this.playing) return;
    const now = this.ctx.currentTime;
    for (const osc of this.live) {
      try {
        osc.stop(now);
      } catch {
        // already stopped
      }
    }
    this.fromStep = this.position();
    this.live = [];
    this.playing = false;
  }

  seek(step: number): void {
    const target = Math.max(0, Math.min(step, this.lengthSteps));
    if (this.playing) {
      const program = this.program;
      const length = this.lengthSteps;
      this.stop();
      this.play(program, length, target);
    } else {
      this.fromStep = target;
    }
  }
}
