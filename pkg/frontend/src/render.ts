/**
 * Pure HTML renderers for the overlay model. These return markup strings so
 * the flow can be exercised without a browser; main.ts mounts them into the
 * document and wires events.
 */

import { Badge, OverlayModel } from "./overlay.js";
import { STEPS } from "./schema.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderBadges(badges: Badge[]): string {
  return badges
    .map(
      (badge) =>
        `<span class="badge badge-${escapeHtml(badge.label)}">` +
        `${escapeHtml(badge.label)}: ${escapeHtml(badge.value)}</span>`,
    )
    .join("");
}

/** Visible pitch window: the studio shows rows 36..96 (C2..C7). */
export const PITCH_LO = 36;
export const PITCH_HI = 96;

export function renderGrid(model: OverlayModel): string {
  const byCell = new Map<number, { layers: Set<string>; onset: boolean; outOfKey: boolean }>();
  for (const cell of model.cells) {
    const key = cell.step * 128 + cell.pitch;
    const entry = byCell.get(key) ?? { layers: new Set(), onset: false, outOfKey: false };
    entry.layers.add(cell.layer);
    entry.onset ||= cell.onset;
    entry.outOfKey ||= cell.outOfKey;
    byCell.set(key, entry);
  }
  const infeasible = new Set(model.infeasibleColumns);

  const rows: string[] = [];
  for (let pitch = PITCH_HI; pitch >= PITCH_LO; pitch--) {
    const shadeRow = model.outOfKeyRows.includes(pitch % 12);
    const cells: string[] = [];
    for (let step = 0; step < STEPS; step++) {
      const entry = byCell.get(step * 128 + pitch);
      const classes = ["cell"];
      if (shadeRow) classes.push("row-out-of-key");
      if (infeasible.has(step)) classes.push("col-infeasible");
      if (entry) {
        for (const layer of entry.layers) classes.push(layer);
        if (entry.onset) classes.push("onset");
        if (entry.outOfKey) classes.push("cell-out-of-key");
      }
      cells.push(
        `<div class="${classes.join(" ")}" data-step="${step}" data-pitch="${pitch}"></div>`,
      );
    }
    rows.push(`<div class="row" data-pitch="${pitch}">${cells.join("")}</div>`);
  }
  return rows.join("");
}

export function renderWarnings(model: OverlayModel): string {
  const parts = model.warnings.map(
    (w) => `<div class="warning">${escapeHtml(w)}</div>`,
  );
  if (model.error !== null) {
    parts.push(`<div class="error">${escapeHtml(model.error)}</div>`);
  }
  return parts.join("");
}
