/**
 * Typed client for the editing service. One edit request in flight at a
 * time: scheduling a new one aborts the previous, so dragging a brush
 * never queues up a backlog of stale renders.
 */

import { bytesToBase64 } from "./png";

export interface HealthInfo {
  status: string;
  image_size: number;
  sessions: number;
  directions: string[];
  step?: number;
  config_digest?: string;
}

export interface ProjectResult {
  id: string;
  reconstruction: string; // base64 png
}

export interface EditParams {
  originalId: string;
  referenceId: string;
  maskPng: Uint8Array;
  space: "wplus" | "w";
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/**
 * fetch with one retry on network-level failure. Requests here are
 * deterministic, so retrying a request whose connection died (a stale
 * keep-alive socket, typically) is safe. Aborts are never retried.
 */
async function fetchRetry(url: string, init: RequestInit): Promise<Response> {
  try {
    return await fetch(url, init);
  } catch (e) {
    if (e instanceof DOMException && e.name === "AbortError") throw e;
    return await fetch(url, init);
  }
}

async function post<T>(base: string, path: string, body: unknown, signal?: AbortSignal): Promise<T> {
  const resp = await fetchRetry(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      detail = (await resp.json()).detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class EditorApi {
  constructor(private readonly base: string = "") {}

  async health(): Promise<HealthInfo> {
    const resp = await fetchRetry(this.base + "/health", {});
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return (await resp.json()) as HealthInfo;
  }

  project(png: Uint8Array): Promise<ProjectResult> {
    return post(this.base, "/project", { image: bytesToBase64(png) });
  }

  edit(params: EditParams, signal?: AbortSignal): Promise<string> {
    return post<{ image: string }>(
      this.base,
      "/edit",
      {
        original_id: params.originalId,
        reference_id: params.referenceId,
        mask: bytesToBase64(params.maskPng),
        space: params.space,
      },
      signal,
    ).then((r) => r.image);
  }

  interpolate(idA: string, idB: string, t: number, signal?: AbortSignal): Promise<string> {
    return post<{ image: string }>(
      this.base,
      "/interpolate",
      { id_a: idA, id_b: idB, t },
      signal,
    ).then((r) => r.image);
  }

  semantic(id: string, direction: string, strength: number, signal?: AbortSignal): Promise<string> {
    return post<{ image: string }>(
      this.base,
      "/semantic",
      { id, direction, strength },
      signal,
    ).then((r) => r.image);
  }
}

/**
 * Debounced single-flight runner. `schedule` delays the task; starting
 * a new one (or scheduling again inside the delay) aborts whatever came
 * before. Stale responses can therefore never overwrite newer ones.
 */
export class RequestGate {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private controller: AbortController | null = null;
  private generation = 0;

  constructor(private readonly delayMs: number = 120) {}

  schedule(task: (signal: AbortSignal) => Promise<void>, onError: (e: unknown) => void): void {
    if (this.timer !== null) clearTimeout(this.timer);
    const gen = ++this.generation;
    this.timer = setTimeout(() => {
      this.timer = null;
      this.controller?.abort();
      const controller = new AbortController();
      this.controller = controller;
      task(controller.signal).catch((e) => {
        const aborted = e instanceof DOMException && e.name === "AbortError";
        if (!aborted && gen === this.generation) onError(e);
      });
    }, this.delayMs);
  }

  cancel(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.controller?.abort();
    this.controller = null;
  }
}
