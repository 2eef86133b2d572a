/** Session files: byte-equal request round-trips and strict validation of
 * anything the editor could not itself have produced. */

import { describe, expect, it } from "vitest";

import { stableStringify } from "../src/schema.js";
import { SessionError, loadSession, saveSession } from "../src/session.js";
import {
  initialState,
  requestJson,
  setChord,
  setGuidanceWeight,
  setKey,
  setRhythm,
  setSeed,
  toggleCell,
} from "../src/state.js";
import { fixture } from "./helpers.js";

function sampleState() {
  let s = initialState();
  s = toggleCell(s, 0, 72);
  s = toggleCell(s, 4, 76);
  s = toggleCell(s, 60, 67);
  for (let beat = 0; beat < 16; beat++) {
    s = setChord(s, beat, ["C", "F", "G", "Am"][Math.floor(beat / 4)]!);
  }
  s = setKey(s, "C");
  s = setRhythm(s, "x.o.");
  s = setGuidanceWeight(s, 3.5);
  s = setSeed(s, 17);
  return s;
}

describe("session round-trips", () => {
  it("load(save(state)) restores byte-equal request JSON", () => {
    const state = sampleState();
    const saved = saveSession(state);
    const loaded = loadSession(saved);
    expect(requestJson(loaded)).toBe(requestJson(state));
    expect(saveSession(loaded)).toBe(saved);
  });

  it("melody, selections and knobs survive the trip", () => {
    const loaded = loadSession(saveSession(sampleState()));
    expect([...loaded.melody].sort((a, b) => a - b)).toEqual(
      [0 * 128 + 72, 4 * 128 + 76, 60 * 128 + 67],
    );
    expect(loaded.chords[0]).toBe("C");
    expect(loaded.chords[15]).toBe("Am");
    expect(loaded.key).toBe("C");
    expect(loaded.rhythm).toBe("x.o.");
    expect(loaded.w).toBe(3.5);
    expect(loaded.seed).toBe(17);
  });

  it("an all-default session round-trips too", () => {
    const state = initialState();
    expect(requestJson(loadSession(saveSession(state)))).toBe(requestJson(state));
  });
});

describe("recorded sessions", () => {
  for (const name of ["session_basic.json", "session_derive.json", "session_key_only.json"]) {
    it(`${name} loads and re-serializes to its own request`, () => {
      const file = fixture<{ request: unknown }>(name);
      const loaded = loadSession(JSON.stringify(file));
      expect(requestJson(loaded)).toBe(stableStringify(file.request));
    });
  }

  it("keys null loads as the derive choice", () => {
    const loaded = loadSession(JSON.stringify(fixture("session_derive.json")));
    expect(loaded.key).toBe("derive");
    expect(loaded.melody.size).toBe(0);
  });
});

describe("rejects what the editor cannot express", () => {
  const base = () => fixture<Record<string, any>>("session_basic.json");

  function expectRejected(mutate: (file: Record<string, any>) => void, pattern: RegExp) {
    const file = base();
    mutate(file);
    expect(() => loadSession(JSON.stringify(file))).toThrow(SessionError);
    expect(() => loadSession(JSON.stringify(file))).toThrow(pattern);
  }

  it("wrong version", () => {
    expectRejected((f) => (f["version"] = 2), /version/);
  });

  it("non-studio plan or guidance", () => {
    expectRejected((f) => (f["request"].plan.mode = "ddpm"), /ddim/);
    expectRejected((f) => (f["request"].plan.eta = 0.5), /ddim/);
    expectRejected((f) => (f["request"].guidance.kappa = 1e-5), /kappa/);
    expectRejected((f) => (f["request"].guidance.rhythm = false), /rhythm guidance/);
  });

  it("out-of-vocabulary symbols", () => {
    expectRejected((f) => (f["request"].chords[3] = "Z7"), /unknown chord/);
    expectRejected((f) => (f["request"].keys = "H"), /unknown key/);
  });

  it("melody cells must match the embedded roll", () => {
    expectRejected((f) => f["melody_cells"].pop(), /melody/);
    expectRejected((f) => (f["melody_cells"][0] = [0, 200]), /melody/);
  });

  it("schema violations and junk", () => {
    expectRejected((f) => (f["request"].length = 32), /length/);
    expectRejected((f) => (f["request"].rhythm = "x.q."), /studio session/);
    expect(() => loadSession("not json")).toThrow(/invalid JSON/);
  });
});
