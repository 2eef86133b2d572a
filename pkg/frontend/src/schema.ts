/**
 * Mirror of the generation service's JSON schemas.
 *
 * Kept in lockstep with the engine's request/response models; the recorded
 * fixtures under tests/fixtures pin the contract, so a drift on either side
 * fails the suite rather than surfacing as a runtime 400.
 */

import { z } from "zod";

export const STEPS = 64;
export const PITCHES = 128;
export const CHANNELS = 2;
export const STEPS_PER_BEAT = 4;

/** Flat row-major (channel, step, pitch) grid, the wire form of a roll. */
export const RollJsonSchema = z
  .strictObject({
    channels: z.literal(CHANNELS),
    length: z.int().min(1),
    pitches: z.literal(PITCHES),
    data: z.array(z.number()),
  })
  .refine((r) => r.data.length === CHANNELS * r.length * PITCHES, {
    message: "data length must equal channels*length*pitches",
  });
export type RollJson = z.infer<typeof RollJsonSchema>;

export const GuidanceParamsSchema = z.strictObject({
  w: z.number().nullable(),
  harmonic: z.boolean(),
  rhythm: z.boolean(),
  kappa: z.number().positive(),
});
export type GuidanceParams = z.infer<typeof GuidanceParamsSchema>;

export const PlanParamsSchema = z.strictObject({
  mode: z.enum(["ddpm", "ddim"]),
  steps: z.int().min(1),
  eta: z.number().min(0).max(1),
  timesteps: z.array(z.int()).nullable(),
});
export type PlanParams = z.infer<typeof PlanParamsSchema>;

export const RhythmRuleSchema = z.strictObject({
  kind: z.enum(["free", "exactly", "at_least", "none"]),
  n: z.int().min(1),
});
export type RhythmRule = z.infer<typeof RhythmRuleSchema>;

export const GenerationRequestSchema = z.strictObject({
  length: z.int().min(1).max(1024),
  chords: z.array(z.string()).nullable(),
  chords_unit: z.enum(["step", "beat", "measure"]),
  keys: z.union([z.string(), z.array(z.string())]).nullable(),
  rhythm: z
    .string()
    .regex(/^[xo.]+$/, "rhythm pattern uses x, o and . only")
    .nullable(),
  rhythm_spec: z.array(RhythmRuleSchema).nullable(),
  melody: RollJsonSchema.nullable(),
  guidance: GuidanceParamsSchema,
  plan: PlanParamsSchema,
  seed: z.int(),
  checkpoint: z.string().nullable(),
});
export type GenerationRequest = z.infer<typeof GenerationRequestSchema>;

export const AuditSchema = z.strictObject({
  out_of_key_rate: z.number().min(0).max(1),
  rhythm_match_rate: z.number().min(0).max(1).nullable(),
  wall_ms: z.number().nonnegative(),
  seed: z.int(),
});
export type Audit = z.infer<typeof AuditSchema>;

export const GenerationResponseSchema = z.strictObject({
  roll: RollJsonSchema,
  midi_base64: z.string(),
  audit: AuditSchema,
  keys: z.array(z.string()),
  out_of_key_pitch_classes: z.array(z.array(z.int().min(0).max(11))),
  warnings: z.array(z.string()),
  checkpoint: z.string(),
});
export type GenerationResponse = z.infer<typeof GenerationResponseSchema>;

/** Every non-2xx body carries at least {error, message}; 409 adds columns. */
export const ErrorBodySchema = z.looseObject({
  error: z.string(),
  message: z.string(),
});
export type ErrorBody = z.infer<typeof ErrorBodySchema>;

export const InfeasibleBodySchema = z.strictObject({
  error: z.literal("infeasible_constraint"),
  message: z.string(),
  columns: z.array(z.int()),
  required: z.array(z.int()),
  candidates: z.array(z.int()),
});
export type InfeasibleBody = z.infer<typeof InfeasibleBodySchema>;

export const KeyTableSchema = z.strictObject({
  out_of_key_pitch_classes: z.record(z.string(), z.array(z.int().min(0).max(11))),
});
export type KeyTable = Record<string, number[]>;

export const HealthSchema = z.strictObject({
  status: z.string(),
  checkpoint: z.string().nullable(),
  model: z
    .strictObject({ type: z.string(), params: z.number().nullable() })
    .nullable(),
  schedule: z
    .strictObject({ T: z.int(), sigma_mode: z.string(), eta: z.number().nullable() })
    .nullable(),
  kernel_backend: z.string(),
});
export type Health = z.infer<typeof HealthSchema>;

export const CheckpointListSchema = z.strictObject({
  checkpoints: z.array(z.string()),
});

/** data[(c*length + step)*128 + pitch], the wire layout. */
export function rollCell(
  roll: RollJson,
  channel: number,
  step: number,
  pitch: number,
): number {
  return roll.data[(channel * roll.length + step) * PITCHES + pitch] ?? 0;
}

/** JSON.stringify with recursively sorted object keys, so equal values give
 * equal bytes (session round-trips are compared as strings). */
export function stableStringify(value: unknown): string {
  return JSON.stringify(sortKeys(value));
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
