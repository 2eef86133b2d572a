/**
 * View-model for the piano-roll display: melody cells, the accompaniment
 * overlay from the last response, out-of-key row flags, audit badges and
 * infeasible-column highlights. Pure functions of (EditorState, key table),
 * so the render layer stays a dumb painter.
 */

import { Audit, InfeasibleBodySchema, KeyTable, rollCell } from "./schema.js";
import { ApiFailure, EditorState, cellOf } from "./state.js";
import { DERIVE_KEY } from "./theory.js";

export type Layer = "melody" | "accompaniment";

export interface OverlayCell {
  step: number;
  pitch: number;
  layer: Layer;
  /** True at note starts; sustain continuations render lighter. */
  onset: boolean;
  outOfKey: boolean;
}

export interface Badge {
  label: string;
  value: string;
}

export interface OverlayModel {
  cells: OverlayCell[];
  /** Pitch-class rows to shade under the chosen key (empty for "derive"). */
  outOfKeyRows: number[];
  badges: Badge[];
  infeasibleColumns: number[];
  warnings: string[];
  error: string | null;
}

/** Out-of-key pitch classes for the current key choice, from the service's
 * table. "derive" flags nothing until a response supplies per-step keys. */
export function outOfKeyRows(state: EditorState, table: KeyTable): number[] {
  if (state.key === DERIVE_KEY) return [];
  return table[state.key] ?? [];
}

function flagged(pitch: number, rows: readonly number[]): boolean {
  return rows.includes(pitch % 12);
}

export function buildOverlay(state: EditorState, table: KeyTable): OverlayModel {
  const rows = outOfKeyRows(state, table);
  const cells: OverlayCell[] = [];

  for (const key of [...state.melody].sort((a, b) => a - b)) {
    const { step, pitch } = cellOf(key);
    cells.push({ step, pitch, layer: "melody", onset: true, outOfKey: flagged(pitch, rows) });
  }

  const response = state.lastResponse;
  if (response !== null) {
    const roll = response.roll;
    // per-step rows from the response win over the editor's single key
    const stepRows = response.out_of_key_pitch_classes;
    for (let step = 0; step < roll.length; step++) {
      const rowsAt = stepRows[step] ?? rows;
      for (let pitch = 0; pitch < 128; pitch++) {
        const onset = rollCell(roll, 0, step, pitch) !== 0;
        const sustain = rollCell(roll, 1, step, pitch) !== 0;
        if (!onset && !sustain) continue;
        cells.push({
          step,
          pitch,
          layer: "accompaniment",
          onset,
          outOfKey: flagged(pitch, rowsAt),
        });
      }
    }
  }

  return {
    cells,
    outOfKeyRows: rows,
    badges: response !== null ? auditBadges(response.audit) : [],
    infeasibleColumns: infeasibleColumns(state.lastError),
    warnings: response !== null ? response.warnings : [],
    error: errorText(state.lastError),
  };
}

function formatRate(rate: number): string {
  if (rate === 0) return "0";
  if (rate === 1) return "100%";
  return `${(rate * 100).toFixed(1)}%`;
}

export function auditBadges(audit: Audit): Badge[] {
  const badges: Badge[] = [
    { label: "out-of-key", value: formatRate(audit.out_of_key_rate) },
  ];
  if (audit.rhythm_match_rate !== null) {
    badges.push({ label: "rhythm", value: formatRate(audit.rhythm_match_rate) });
  }
  badges.push({ label: "latency", value: `${Math.round(audit.wall_ms)} ms` });
  badges.push({ label: "seed", value: String(audit.seed) });
  return badges;
}

/** Columns to highlight when the service answered 409. */
export function infeasibleColumns(failure: ApiFailure | null): number[] {
  if (failure === null || failure.status !== 409) return [];
  const parsed = InfeasibleBodySchema.safeParse(failure.body);
  return parsed.success ? parsed.data.columns : [];
}

function errorText(failure: ApiFailure | null): string | null {
  if (failure === null) return null;
  if (failure.status === 0) return `service unreachable: ${failure.message}`;
  return `${failure.body?.error ?? "error"} (${failure.status}): ${failure.message}`;
}
