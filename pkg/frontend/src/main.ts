/**
 * Browser bootstrap: mounts the editor, wires events, and drives playback.
 * All state logic lives in the pure modules; this file only touches the DOM.
 */

import { ApiClient } from "./api.js";
import { StudioController } from "./controller.js";
import { buildOverlay } from "./overlay.js";
import {
  AudioContextLike,
  Transport,
  notesFromCells,
  notesFromRoll,
} from "./playback.js";
import { renderBadges, renderGrid, renderWarnings } from "./render.js";
import { STEPS } from "./schema.js";
import {
  CHORD_PALETTE,
  BEATS,
  setChord,
  setGuidanceWeight,
  setHarmonic,
  setKey,
  setRhythm,
  setSeed,
  setSteps,
  toggleCell,
} from "./state.js";
import { loadSession, saveSession } from "./session.js";
import { DERIVE_KEY, KEY_SYMBOLS } from "./theory.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

function makeAudioContext(): AudioContextLike | null {
  const Ctor =
    (window as unknown as { AudioContext?: new () => AudioContext }).AudioContext ??
    (window as unknown as { webkitAudioContext?: new () => AudioContext })
      .webkitAudioContext;
  if (Ctor === undefined) return null;
  try {
    return new Ctor() as unknown as AudioContextLike;
  } catch {
    return null;
  }
}

function main(): void {
  const api = new ApiClient("");
  const controller = new StudioController(api);
  const transport = new Transport(makeAudioContext(), 120);

  const grid = el<HTMLDivElement>("grid");
  const badges = el<HTMLDivElement>("badges");
  const notices = el<HTMLDivElement>("notices");
  const chordsBox = el<HTMLDivElement>("chords");
  const keySelect = el<HTMLSelectElement>("key");
  const rhythmInput = el<HTMLInputElement>("rhythm");
  const wInput = el<HTMLInputElement>("w");
  const harmonicInput = el<HTMLInputElement>("harmonic");
  const stepsInput = el<HTMLInputElement>("steps");
  const seedInput = el<HTMLInputElement>("seed");
  const playBtn = el<HTMLButtonElement>("play");
  const stopBtn = el<HTMLButtonElement>("stop");
  const seekInput = el<HTMLInputElement>("seek");

  for (const symbol of [DERIVE_KEY, ...KEY_SYMBOLS]) {
    const opt = document.createElement("option");
    opt.value = symbol;
    opt.textContent = symbol;
    keySelect.appendChild(opt);
  }
  for (let beat = 0; beat < BEATS; beat++) {
    const select = document.createElement("select");
    select.dataset["beat"] = String(beat);
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "-";
    select.appendChild(blank);
    for (const symbol of CHORD_PALETTE) {
      const opt = document.createElement("option");
      opt.value = symbol;
      opt.textContent = symbol;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => {
      controller.update((s) => setChord(s, beat, select.value === "" ? null : select.value));
    });
    chordsBox.appendChild(select);
  }

  function redraw(): void {
    const model = buildOverlay(controller.state, controller.keyTable);
    grid.innerHTML = renderGrid(model);
    badges.innerHTML = renderBadges(model.badges);
    notices.innerHTML = renderWarnings(model);
    seedInput.value = String(controller.state.seed);
    const status = transport.status();
    playBtn.disabled = !status.enabled;
    stopBtn.disabled = !status.enabled;
    if (status.message !== null) {
      notices.innerHTML += `<div class="warning">${status.message}</div>`;
    }
  }
  controller.onChange(redraw);

  grid.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const step = target.dataset["step"];
    const pitch = target.dataset["pitch"];
    if (step === undefined || pitch === undefined) return;
    controller.update((s) => toggleCell(s, Number(step), Number(pitch)));
  });

  keySelect.addEventListener("change", () => {
    controller.update((s) => setKey(s, keySelect.value));
  });
  rhythmInput.addEventListener("change", () => {
    controller.update((s) => setRhythm(s, rhythmInput.value));
  });
  wInput.addEventListener("change", () => {
    const text = wInput.value.trim();
    controller.update((s) => setGuidanceWeight(s, text === "" ? null : Number(text)));
  });
  harmonicInput.addEventListener("change", () => {
    controller.update((s) => setHarmonic(s, harmonicInput.checked));
  });
  stepsInput.addEventListener("change", () => {
    controller.update((s) => setSteps(s, Number(stepsInput.value)));
  });
  seedInput.addEventListener("change", () => {
    controller.update((s) => setSeed(s, Number(seedInput.value)));
  });

  el<HTMLButtonElement>("generate").addEventListener("click", () => {
    void controller.generate();
  });
  el<HTMLButtonElement>("regenerate").addEventListener("click", () => {
    void controller.regenerate();
  });

  function currentProgram() {
    const events = notesFromCells(controller.state.melody);
    const response = controller.state.lastResponse;
    if (response !== null) {
      events.push(...notesFromRoll(response.roll, "accompaniment"));
    }
    return events;
  }
  playBtn.addEventListener("click", () => {
    transport.play(currentProgram(), STEPS, Number(seekInput.value) || 0);
  });
  stopBtn.addEventListener("click", () => transport.stop());
  seekInput.addEventListener("change", () => {
    transport.seek(Number(seekInput.value) || 0);
  });

  el<HTMLButtonElement>("save").addEventListener("click", () => {
    const blob = new Blob([saveSession(controller.state)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });
  el<HTMLInputElement>("load").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (file === undefined) return;
    const text = await file.text();
    controller.update(() => loadSession(text));
  });

  void controller.loadKeyTable().then(redraw, redraw);
  redraw();
}

main();
