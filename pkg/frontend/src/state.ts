/**
 * Editor state and its serialization into a generation request.
 *
 * The state is immutable; every edit returns a new state object so views can
 * diff by identity. The melody grid is a sparse set of onset cells (each a
 * one-step note on the 64x128 grid); generation responses and errors land in
 * `lastResponse` / `lastError` and never touch the melody.
 */

import {
  GenerationRequest,
  GenerationResponse,
  ErrorBody,
  RollJson,
  CHANNELS,
  PITCHES,
  STEPS,
  STEPS_PER_BEAT,
  stableStringify,
} from "./schema.js";
import { CHORD_SYMBOLS, DERIVE_KEY, isChordSymbol, isKeySymbol } from "./theory.js";

export const BEATS = STEPS / STEPS_PER_BEAT;
export const DEFAULT_KAPPA = 1e-6;

export interface ApiFailure {
  /** HTTP status, or 0 for transport-level failures. */
  status: number;
  body: ErrorBody | null;
  message: string;
}

export interface EditorState {
  /** Sparse onset cells, keyed step*128+pitch. */
  readonly melody: ReadonlySet<number>;
  /** One selection per beat; null = unset (carried forward on serialize). */
  readonly chords: readonly (string | null)[];
  /** Key symbol, or "derive" to let the engine infer keys from the chords. */
  readonly key: string;
  /** Onset pattern (x/o/.), tiled over the grid; "" = unconstrained. */
  readonly rhythm: string;
  readonly w: number | null;
  readonly harmonic: boolean;
  readonly steps: number;
  readonly seed: number;
  readonly lastResponse: GenerationResponse | null;
  readonly lastError: ApiFailure | null;
  readonly playhead: number;
}

export function initialState(): EditorState {
  return {
    melody: new Set(),
    chords: Array(BEATS).fill(null),
    key: "C",
    rhythm: "",
    w: null,
    harmonic: true,
    steps: 10,
    seed: 0,
    lastResponse: null,
    lastError: null,
    playhead: 0,
  };
}

export function cellKey(step: number, pitch: number): number {
  return step * PITCHES + pitch;
}

export function cellOf(key: number): { step: number; pitch: number } {
  return { step: Math.floor(key / PITCHES), pitch: key % PITCHES };
}

function checkCell(step: number, pitch: number): void {
  if (!Number.isInteger(step) || step < 0 || step >= STEPS) {
    throw new RangeError(`step ${step} outside [0, ${STEPS})`);
  }
  if (!Number.isInteger(pitch) || pitch < 0 || pitch >= PITCHES) {
    throw new RangeError(`pitch ${pitch} outside [0, ${PITCHES})`);
  }
}

export function toggleCell(state: EditorState, step: number, pitch: number): EditorState {
  checkCell(step, pitch);
  const melody = new Set(state.melody);
  const key = cellKey(step, pitch);
  if (melody.has(key)) melody.delete(key);
  else melody.add(key);
  return { ...state, melody };
}

export function setChord(state: EditorState, beat: number, symbol: string | null): EditorState {
  if (!Number.isInteger(beat) || beat < 0 || beat >= BEATS) {
    throw new RangeError(`beat ${beat} outside [0, ${BEATS})`);
  }
  if (symbol !== null && !isChordSymbol(symbol)) {
    throw new Error(`unknown chord symbol ${JSON.stringify(symbol)}`);
  }
  const chords = state.chords.slice();
  chords[beat] = symbol;
  return { ...state, chords };
}

export function setKey(state: EditorState, key: string): EditorState {
  if (key !== DERIVE_KEY && !isKeySymbol(key)) {
    throw new Error(`unknown key symbol ${JSON.stringify(key)}`);
  }
  return { ...state, key };
}

export function setRhythm(state: EditorState, pattern: string): EditorState {
  if (pattern !== "" && !/^[xo.]+$/.test(pattern)) {
    throw new Error("rhythm pattern uses x, o and . only");
  }
  if (pattern !== "" && STEPS % pattern.length !== 0) {
    throw new Error(`pattern length ${pattern.length} does not divide ${STEPS}`);
  }
  return { ...state, rhythm: pattern };
}

export function setGuidanceWeight(state: EditorState, w: number | null): EditorState {
  if (w !== null && !Number.isFinite(w)) throw new Error("w must be finite or null");
  return { ...state, w };
}

export function setHarmonic(state: EditorState, harmonic: boolean): EditorState {
  return { ...state, harmonic };
}

export function setSteps(state: EditorState, steps: number): EditorState {
  if (!Number.isInteger(steps) || steps < 1) throw new Error("steps must be >= 1");
  return { ...state, steps };
}

export function setSeed(state: EditorState, seed: number): EditorState {
  if (!Number.isInteger(seed)) throw new Error("seed must be an integer");
  return { ...state, seed };
}

export function bumpSeed(state: EditorState): EditorState {
  return { ...state, seed: state.seed + 1 };
}

export function setPlayhead(state: EditorState, step: number): EditorState {
  return { ...state, playhead: step };
}

/** Responses replace only the accompaniment layer (and clear the error). */
export function applyResponse(state: EditorState, response: GenerationResponse): EditorState {
  return { ...state, lastResponse: response, lastError: null };
}

/** Errors are surfaced non-destructively: the previous result stays. */
export function applyFailure(state: EditorState, failure: ApiFailure): EditorState {
  return { ...state, lastError: failure };
}

export function melodyCells(state: EditorState): [number, number][] {
  const cells = [...state.melody].map((key) => {
    const { step, pitch } = cellOf(key);
    return [step, pitch] as [number, number];
  });
  cells.sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  return cells;
}

/** Sparse cells -> wire roll: each cell is a one-step note (onset+sustain). */
export function melodyToRoll(state: EditorState): RollJson | null {
  if (state.melody.size === 0) return null;
  const data = new Array<number>(CHANNELS * STEPS * PITCHES).fill(0);
  for (const key of state.melody) {
    data[key] = 1; // onset channel
    data[STEPS * PITCHES + key] = 1; // sustain channel
  }
  return { channels: CHANNELS, length: STEPS, pitches: PITCHES, data };
}

/** Per-beat selections -> full symbol list: gaps carry the previous chord
 * forward (leading gaps take the first set chord); all-unset -> null. */
export function filledChords(state: EditorState): string[] | null {
  const first = state.chords.find((c) => c !== null);
  if (first === undefined) return null;
  const out: string[] = [];
  let current = first as string;
  for (const chord of state.chords) {
    if (chord !== null) current = chord;
    out.push(current);
  }
  return out;
}

export function toRequest(state: EditorState): GenerationRequest {
  return {
    length: STEPS,
    chords: filledChords(state),
    chords_unit: "beat",
    keys: state.key === DERIVE_KEY ? null : state.key,
    rhythm: state.rhythm === "" ? null : state.rhythm,
    rhythm_spec: null,
    melody: melodyToRoll(state),
    guidance: {
      w: state.w,
      harmonic: state.harmonic,
      rhythm: true,
      kappa: DEFAULT_KAPPA,
    },
    plan: { mode: "ddim", steps: state.steps, eta: 0, timesteps: null },
    seed: state.seed,
    checkpoint: null,
  };
}

/** Canonical request bytes; two states that serialize equal are
 * interchangeable as far as the engine is concerned. */
export function requestJson(state: EditorState): string {
  return stableStringify(toRequest(state));
}

/** The studio's chord palette (re-exported for selector views). */
export const CHORD_PALETTE = CHORD_SYMBOLS;
