/**
 * Session files: the generation request JSON plus the sparse melody grid.
 *
 * The request part is the exact wire body the editor would POST, so loading
 * a session and re-serializing restores it byte-for-byte. Load validates
 * that the request is studio-shaped (the fields the editor can actually
 * express) and that the embedded melody roll matches the sparse cell list.
 */

import {
  GenerationRequest,
  GenerationRequestSchema,
  PITCHES,
  STEPS,
  stableStringify,
} from "./schema.js";
import {
  BEATS,
  DEFAULT_KAPPA,
  EditorState,
  cellKey,
  initialState,
  melodyCells,
  melodyToRoll,
  toRequest,
} from "./state.js";
import { DERIVE_KEY, isChordSymbol, isKeySymbol } from "./theory.js";

export const SESSION_VERSION = 1;

export interface SessionFile {
  version: number;
  request: GenerationRequest;
  melody_cells: [number, number][];
}

export class SessionError extends Error {}

export function saveSession(state: EditorState): string {
  const file: SessionFile = {
    version: SESSION_VERSION,
    request: toRequest(state),
    melody_cells: melodyCells(state),
  };
  return stableStringify(file);
}

function fail(reason: string): never {
  throw new SessionError(`not a studio session: ${reason}`);
}

export function loadSession(text: string): EditorState {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (exc) {
    fail(`invalid JSON (${(exc as Error).message})`);
  }
  const obj = raw as Partial<SessionFile>;
  if (obj.version !== SESSION_VERSION) fail(`unsupported version ${obj.version}`);

  const parsed = GenerationRequestSchema.safeParse(obj.request);
  if (!parsed.success) fail(parsed.error.issues[0]?.message ?? "bad request");
  const req = parsed.data;

  // fields with no editor control must sit at their studio values
  if (req.length !== STEPS) fail(`length ${req.length} != ${STEPS}`);
  if (req.chords_unit !== "beat") fail("chords_unit must be beat");
  if (req.rhythm_spec !== null) fail("rhythm_spec is not editable here");
  if (req.checkpoint !== null) fail("checkpoint pinning is not editable here");
  if (!req.guidance.rhythm) fail("rhythm guidance must stay on");
  if (req.guidance.kappa !== DEFAULT_KAPPA) fail("kappa is fixed");
  if (req.plan.mode !== "ddim" || req.plan.eta !== 0 || req.plan.timesteps !== null) {
    fail("plan must be ddim with eta 0");
  }
  if (Array.isArray(req.keys)) fail("per-step key lists are not editable here");
  if (req.keys !== null && !isKeySymbol(req.keys)) fail(`unknown key ${req.keys}`);
  if (req.chords !== null) {
    if (req.chords.length !== BEATS) fail(`need ${BEATS} beat chords`);
    for (const symbol of req.chords) {
      if (!isChordSymbol(symbol)) fail(`unknown chord ${JSON.stringify(symbol)}`);
    }
  }
  if (req.rhythm !== null && STEPS % req.rhythm.length !== 0) {
    fail("rhythm pattern must divide the grid");
  }

  if (!Array.isArray(obj.melody_cells)) fail("missing melody_cells");
  const melody = new Set<number>();
  for (const cell of obj.melody_cells) {
    if (!Array.isArray(cell) || cell.length !== 2) fail("bad melody cell");
    const [step, pitch] = cell;
    if (!Number.isInteger(step) || step < 0 || step >= STEPS) fail("bad melody cell");
    if (!Number.isInteger(pitch) || pitch < 0 || pitch >= PITCHES) fail("bad melody cell");
    melody.add(cellKey(step, pitch));
  }

  const state: EditorState = {
    ...initialState(),
    melody,
    chords: req.chords !== null ? req.chords.slice() : Array(BEATS).fill(null),
    key: req.keys === null ? DERIVE_KEY : req.keys,
    rhythm: req.rhythm ?? "",
    w: req.guidance.w,
    harmonic: req.guidance.harmonic,
    steps: req.plan.steps,
    seed: req.seed,
  };

  // the sparse grid and the embedded roll must agree cell for cell
  const roll = melodyToRoll(state);
  if (stableStringify(roll) !== stableStringify(req.melody)) {
    fail("melody_cells do not match the request melody roll");
  }
  return state;
}
