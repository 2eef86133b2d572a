/** The schema mirror must accept everything the live service was recorded
 * emitting, and the recorded bodies must carry the documented shapes. */

import { describe, expect, it } from "vitest";

import {
  GenerationRequestSchema,
  GenerationResponseSchema,
  HealthSchema,
  InfeasibleBodySchema,
  KeyTableSchema,
  rollCell,
  stableStringify,
} from "../src/schema.js";
import { fixture } from "./helpers.js";

describe("recorded service bodies parse against the mirror", () => {
  it("generation request", () => {
    const req = GenerationRequestSchema.parse(fixture("generate_request.json"));
    expect(req.length).toBe(64);
    expect(req.chords_unit).toBe("beat");
    expect(req.plan.mode).toBe("ddim");
  });

  it("generation response", () => {
    const resp = GenerationResponseSchema.parse(fixture("generate_response.json"));
    expect(resp.roll.length).toBe(64);
    expect(resp.audit.out_of_key_rate).toBe(0);
    expect(resp.keys).toHaveLength(64);
    expect(resp.out_of_key_pitch_classes).toHaveLength(64);
    expect(resp.checkpoint).toBe("studio-toy");
  });

  it("theory key table has all 24 keys with the documented rows", () => {
    const table = KeyTableSchema.parse(fixture("theory_keys.json")).out_of_key_pitch_classes;
    expect(Object.keys(table)).toHaveLength(24);
    expect(table["C"]).toEqual([1, 3, 6, 8, 10]);
    expect(table["D"]).toEqual([0, 3, 5, 8, 10]);
    expect(table["Am"]).toEqual([1, 3, 6, 10]);
  });

  it("infeasible body names columns, required counts and candidates", () => {
    const body = InfeasibleBodySchema.parse(fixture("infeasible_409.json"));
    expect(body.columns).toEqual([3]);
    expect(body.required).toEqual([100]);
    expect(body.candidates).toEqual([75]);
  });

  it("health body", () => {
    const health = HealthSchema.parse(fixture("health_loaded.json"));
    expect(health.status).toBe("ok");
    expect(health.checkpoint).toBe("studio-toy");
    expect(health.schedule?.T).toBe(100);
  });
});

describe("wire helpers", () => {
  it("rollCell indexes the flat row-major layout", () => {
    const data = new Array(2 * 4 * 128).fill(0);
    data[(0 * 4 + 2) * 128 + 60] = 1; // onset channel, step 2, pitch 60
    data[(1 * 4 + 3) * 128 + 61] = 1; // sustain channel, step 3, pitch 61
    const roll = { channels: 2 as const, length: 4, pitches: 128 as const, data };
    expect(rollCell(roll, 0, 2, 60)).toBe(1);
    expect(rollCell(roll, 1, 3, 61)).toBe(1);
    expect(rollCell(roll, 0, 3, 61)).toBe(0);
    expect(rollCell(roll, 1, 2, 60)).toBe(0);
  });

  it("stableStringify is order-insensitive and recursive", () => {
    const a = { b: 1, a: { d: [1, { y: 2, x: 3 }], c: null } };
    const b = { a: { c: null, d: [1, { x: 3, y: 2 }] }, b: 1 };
    expect(stableStringify(a)).toBe(stableStringify(b));
    expect(stableStringify(a)).toBe('{"a":{"c":null,"d":[1,{"x":3,"y":2}]},"b":1}');
  });
});
