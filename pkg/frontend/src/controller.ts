/**
 * Generation flow: serializes the editor state, talks to the service, and
 * applies results. At most one request is in flight; a generate issued while
 * one is pending queues a single follow-up, and any response that is not the
 * newest request (superseded seed or edits) is discarded rather than applied.
 * The melody grid is never written by this flow.
 */

import { ApiClient, ApiError } from "./api.js";
import { KeyTable } from "./schema.js";
import {
  EditorState,
  applyFailure,
  applyResponse,
  bumpSeed,
  initialState,
  toRequest,
} from "./state.js";

export class StudioController {
  private stateValue: EditorState;
  private listeners: ((state: EditorState) => void)[] = [];
  private keyTableValue: KeyTable = {};
  private seq = 0;
  private inFlight = false;
  private queued = false;
  private settled: Promise<void> = Promise.resolve();
  private settle: () => void = () => {};

  constructor(
    private readonly api: ApiClient,
    initial?: EditorState,
  ) {
    this.stateValue = initial ?? initialState();
  }

  get state(): EditorState {
    return this.stateValue;
  }

  get keyTable(): KeyTable {
    return this.keyTableValue;
  }

  onChange(listener: (state: EditorState) => void): void {
    this.listeners.push(listener);
  }

  /** Apply a pure state update (edits route through here). */
  update(fn: (state: EditorState) => EditorState): void {
    this.stateValue = fn(this.stateValue);
    for (const listener of this.listeners) listener(this.stateValue);
  }

  /** Fetch the engine's out-of-key table once at startup. */
  async loadKeyTable(): Promise<void> {
    this.keyTableValue = await this.api.theoryKeys();
    this.update((s) => s);
  }

  /**
   * Request a generation for the current state. Returns a promise that
   * resolves when no request is in flight anymore (including a queued
   * follow-up triggered while waiting).
   */
  generate(): Promise<void> {
    this.seq += 1;
    if (this.inFlight) {
      // one pending follow-up is enough: it snapshots the newest state
      this.queued = true;
      return this.settled;
    }
    this.inFlight = true;
    this.settled = new Promise((resolve) => {
      this.settle = resolve;
    });
    void this.fire(this.seq);
    return this.settled;
  }

  /** New seed, then generate: replaces only the accompaniment layer. */
  regenerate(): Promise<void> {
    this.update(bumpSeed);
    return this.generate();
  }

  private async fire(seq: number): Promise<void> {
    const request = toRequest(this.stateValue);
    let outcome: (state: EditorState) => EditorState;
    try {
      const response = await this.api.generate(request);
      outcome = (state) => applyResponse(state, response);
    } catch (exc) {
      if (exc instanceof ApiError) {
        const failure = { status: exc.status, body: exc.body, message: exc.message };
        outcome = (state) => applyFailure(state, failure);
      } else {
        outcome = (state) =>
          applyFailure(state, { status: 0, body: null, message: String(exc) });
      }
    }
    if (seq === this.seq) {
      this.update(outcome);
    }
    // else: superseded while in flight; drop the stale outcome

    if (this.queued) {
      this.queued = false;
      void this.fire(this.seq);
      return;
    }
    this.inFlight = false;
    this.settle();
  }
}
