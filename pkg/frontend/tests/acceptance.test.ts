/** Release gate for the studio, one bar per test: recorded editor states
 * serialize to schema-valid requests, the generation flow renders an
 * accompaniment overlay with the zero-out-of-key badge against a stubbed
 * service, and a 64-step playback at 120 BPM spans 8.0 +/- 0.1 s. */

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { StudioController } from "../src/controller.js";
import { buildOverlay } from "../src/overlay.js";
import { Transport, notesFromRoll, rollDurationSeconds } from "../src/playback.js";
import { renderBadges, renderGrid } from "../src/render.js";
import {
  GenerationRequestSchema,
  GenerationResponse,
  stableStringify,
} from "../src/schema.js";
import { loadSession } from "../src/session.js";
import { toRequest } from "../src/state.js";
import { FakeAudioContext, fixture, stubFetch } from "./helpers.js";

const SESSIONS = ["session_basic.json", "session_derive.json", "session_key_only.json"];

describe("studio acceptance", () => {
  it("recorded editor states serialize to schema-valid requests", () => {
    for (const name of SESSIONS) {
      const state = loadSession(JSON.stringify(fixture(name)));
      const request = GenerationRequestSchema.parse(toRequest(state));
      expect(request.length).toBe(64);
    }
    // the flagship state rebuilds the exact body the service answered
    const state = loadSession(JSON.stringify(fixture("session_basic.json")));
    expect(stableStringify(toRequest(state))).toBe(
      stableStringify(fixture("generate_request.json")),
    );
  });

  it("generation flow renders the accompaniment overlay and the out-of-key: 0 badge", async () => {
    const { fetch } = stubFetch((url) => {
      if (url.endsWith("/theory/keys")) {
        return { status: 200, body: fixture("theory_keys.json") };
      }
      if (url.endsWith("/generate")) {
        return { status: 200, body: fixture("generate_response.json") };
      }
      return { status: 404, body: { error: "not_found", message: url } };
    });
    const initial = loadSession(JSON.stringify(fixture("session_basic.json")));
    const controller = new StudioController(new ApiClient("", fetch), initial);
    await controller.loadKeyTable();

    const melodyBefore = controller.state.melody;
    await controller.generate();

    const model = buildOverlay(controller.state, controller.keyTable);
    const accomp = model.cells.filter((c) => c.layer === "accompaniment");
    expect(accomp.length).toBeGreaterThan(0);
    expect(renderGrid(model)).toContain("accompaniment");
    expect(model.badges[0]).toEqual({ label: "out-of-key", value: "0" });
    expect(renderBadges(model.badges)).toContain("out-of-key: 0");
    expect(controller.state.melody).toBe(melodyBefore);
  });

  it("a 64-step roll at 120 BPM plays for 8.0 +/- 0.1 s", () => {
    const response = fixture<GenerationResponse>("generate_response.json");
    expect(response.roll.length).toBe(64);

    const duration = rollDurationSeconds(response.roll.length, 120);
    expect(Math.abs(duration - 8.0)).toBeLessThanOrEqual(0.1);

    const ctx = new FakeAudioContext();
    const transport = new Transport(ctx, 120);
    transport.play(notesFromRoll(response.roll, "accompaniment"), response.roll.length);
    expect(Math.abs(transport.durationSeconds() - 8.0)).toBeLessThanOrEqual(0.1);
    ctx.advance(8.0 - 0.1);
    expect(transport.isPlaying()).toBe(true);
    ctx.advance(0.2);
    expect(transport.isPlaying()).toBe(false);
  });
});
