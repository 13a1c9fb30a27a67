import { apiBase } from "./config.js";
import type { AlertDetail, AlertSummary, SimilarExemplar } from "./types.js";

export type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Thin typed client; the fetch implementation is injectable for tests. */
export class ApiClient {
  constructor(
    private doFetch: FetchLike = (...args) => fetch(...args),
    private base: string = apiBase(),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.doFetch(`${this.base}${path}`, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, `${init?.method ?? "GET"} ${path} -> ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  listAlerts(status?: string, limit?: number): Promise<AlertSummary[]> {
    const params = new URLSearchParams();
    if (status) params.set("status", status);
    if (limit !== undefined) params.set("limit", String(limit));
    const qs = params.toString();
    return this.request(`/alerts${qs ? `?${qs}` : ""}`);
  }

  getAlert(alertId: string): Promise<AlertDetail> {
    return this.request(`/alerts/${encodeURIComponent(alertId)}`);
  }

  postAnnotation(alertId: string, label: number, notes = ""): Promise<AlertDetail> {
    return this.request(`/alerts/${encodeURIComponent(alertId)}/annotation`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ label, source: "Human", notes }),
    });
  }

  listExemplars(): Promise<SimilarExemplar[]> {
    return this.request("/exemplars");
  }

  async health(): Promise<boolean> {
    try {
      await this.request("/health");
      return true;
    } catch {
      return false;
    }
  }
}
