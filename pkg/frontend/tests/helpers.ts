/** Shared test scaffolding: fixture loading, a scriptable fetch stub, and a
 * recording fake of the AudioContext slice the transport uses. */

import { readFileSync } from "node:fs";

import type { FetchLike } from "../src/api.js";
import type {
  AudioContextLike,
  AudioParamLike,
  GainLike,
  OscillatorLike,
} from "../src/playback.js";

export function fixture<T>(name: string): T {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export interface StubReply {
  status: number;
  body: unknown;
}

export type StubHandler = (
  url: string,
  init?: RequestInit,
) => StubReply | Promise<StubReply>;

export interface StubCall {
  url: string;
  body: unknown;
}

/** fetch replacement that answers from a handler and records every call. */
export function stubFetch(handler: StubHandler): { fetch: FetchLike; calls: StubCall[] } {
  const calls: StubCall[] = [];
  const fetch: FetchLike = async (url, init) => {
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;
    calls.push({ url, body });
    const reply = await handler(url, init);
    return Response.json(reply.body, { status: reply.status });
  };
  return { fetch, calls };
}

/** Resolvable gate for in-flight request tests. */
export function gate(): { promise: Promise<void>; open: () => void } {
  let open!: () => void;
  const promise = new Promise<void>((resolve) => {
    open = resolve;
  });
  return { promise, open };
}

class FakeParam implements AudioParamLike {
  value = 0;
  events: { kind: string; value: number; time: number }[] = [];

  setValueAtTime(value: number, time: number): unknown {
    this.events.push({ kind: "set", value, time });
    this.value = value;
    return this;
  }

  linearRampToValueAtTime(value: number, time: number): unknown {
    this.events.push({ kind: "ramp", value, time });
    this.value = value;
    return this;
  }
}

export class FakeOscillator implements OscillatorLike {
  type = "sine";
  frequency = new FakeParam();
  started: number[] = [];
  stopped: number[] = [];

  connect(node: unknown): unknown {
    return node;
  }

  start(when: number): void {
    this.started.push(when);
  }

  stop(when: number): void {
    this.stopped.push(when);
  }
}

class FakeGain implements GainLike {
  gain = new FakeParam();

  connect(node: unknown): unknown {
    return node;
  }
}

export class FakeAudioContext implements AudioContextLike {
  currentTime = 0;
  destination = {};
  oscillators: FakeOscillator[] = [];

  createOscillator(): OscillatorLike {
    const osc = new FakeOscillator();
    this.oscillators.push(osc);
    return osc;
  }

  createGain(): GainLike {
    return new FakeGain();
  }

  advance(seconds: number): void {
    this.currentTime += seconds;
  }
}
