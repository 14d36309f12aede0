// Thin typed client for the service's HTTP endpoints.

import { DisplacementField, ParamsAck, Stats } from "./types.js";

export class FieldErrors extends Error {
  constructor(readonly errors: Record<string, string>) {
    super(Object.entries(errors).map(([f, m]) => `${f}: ${m}`).join("; ") || "bad request");
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base = "",
    private fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + url, init);
    if (resp.status === 400) {
      const body = await resp.json().catch(() => ({ errors: [] }));
      const errors: Record<string, string> = {};
      for (const e of body.errors ?? []) {
        errors[e.field ?? ""] = e.message ?? "invalid";
      }
      throw new FieldErrors(errors);
    }
    if (!resp.ok) throw new Error(`${url} -> HTTP ${resp.status}`);
    return (await resp.json()) as T;
  }

  getParams(): Promise<ParamsAck> {
    return this.json<ParamsAck>("/api/params");
  }

  putParams(updates: Record<string, number>): Promise<ParamsAck> {
    return this.json<ParamsAck>("/api/params", {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(updates),
    });
  }

  postSource(bytes: Uint8Array, contentType = "application/octet-stream"): Promise<{ ok: boolean; width: number; height: number }> {
    return this.json("/api/source", {
      method: "POST",
      headers: { "content-type": contentType },
      body: bytes,
    });
  }

  getDisplacement(step = 16): Promise<DisplacementField> {
    return this.json<DisplacementField>(`/api/displacement?step=${step}`);
  }

  getStats(): Promise<Stats> {
    return this.json<Stats>("/api/stats");
  }

  /** Cache-busted so each poll returns a fresh mosaic. */
  psfGridUrl(n = 8): string {
    return `${this.base}/api/psf-grid?n=${n}&t=${Date.now()}`;
  }

  streamUrl(): string {
    return toWs(this.base) + "/api/stream";
  }

  eventsUrl(): string {
    return toWs(this.base) + "/api/events";
  }
}

function toWs(base: string): string {
  if (base === "") {
    const loc = window.location;
    return (loc.protocol === "https:" ? "wss://" : "ws://") + loc.host;
  }
  return base.replace(/^http/, "ws");
}
