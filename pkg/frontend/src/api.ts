/**
 * Thin typed client for the generation service. All routes are versioned
 * under /api/v1; response bodies are validated against the schema mirror so
 * contract drift fails loudly at the boundary.
 */

import {
  CheckpointListSchema,
  ErrorBody,
  ErrorBodySchema,
  GenerationRequest,
  GenerationResponse,
  GenerationResponseSchema,
  Health,
  HealthSchema,
  KeyTable,
  KeyTableSchema,
} from "./schema.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody | null,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "") + "/api/v1";
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, init);
    } catch (exc) {
      throw new ApiError(0, null, `service unreachable: ${(exc as Error).message}`);
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      // non-JSON body; leave payload null
    }
    if (!response.ok) {
      const parsed = ErrorBodySchema.safeParse(payload);
      const body = parsed.success ? parsed.data : null;
      throw new ApiError(response.status, body, body?.message ?? `HTTP ${response.status}`);
    }
    return payload;
  }

  async health(): Promise<Health> {
    return HealthSchema.parse(await this.request("/health"));
  }

  async checkpoints(): Promise<string[]> {
    return CheckpointListSchema.parse(await this.request("/checkpoints")).checkpoints;
  }

  async loadCheckpoint(id: string): Promise<void> {
    await this.request("/checkpoints/load", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ id }),
    });
  }

  /** The engine's own out-of-key table; the single source for row flagging. */
  async theoryKeys(): Promise<KeyTable> {
    const body = KeyTableSchema.parse(await this.request("/theory/keys"));
    return body.out_of_key_pitch_classes;
  }

  async generate(request: GenerationRequest): Promise<GenerationResponse> {
    const body = await this.request("/generate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    return GenerationResponseSchema.parse(body);
  }
}
