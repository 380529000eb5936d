/** Typed client for the curation service HTTP+JSON endpoints. */

export type Verdict = "true-duplicate" | "not-duplicate";

export interface PairView {
  key: string;
  split: string;
  left_id: string;
  right_id: string;
  distance: number;
  verdict: string;
  reviewer: string | null;
  reviewed_at: number | null;
}

export interface LeakageSplit {
  split: string;
  size: number;
  candidates: number;
  reviewed: number;
  confirmed: number;
  estimated: number;
  rate: number;
  rate_percent: string;
  flagged_for_exclusion: string[];
}

export interface LeakageReport {
  splits: LeakageSplit[];
}

/** Server refused the request (4xx); not retryable. */
export class RejectedError extends Error {
  constructor(public status: number, detail: string) {
    super(`rejected (${status}): ${detail}`);
  }
}

export class CuratorApi {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      if (response.status >= 400 && response.status < 500) {
        throw new RejectedError(response.status, detail);
      }
      throw new Error(`request failed (${response.status}): ${detail}`);
    }
    return (await response.json()) as T;
  }

  async listPairs(status: string, limit: number): Promise<PairView[]> {
    const body = await this.request<{ pairs: PairView[] }>(
      `/v1/pairs?status=${encodeURIComponent(status)}&limit=${limit}`,
    );
    return body.pairs;
  }

  postVerdict(key: string, verdict: Verdict, reviewer?: string): Promise<PairView> {
    return this.request<PairView>(`/v1/pairs/${encodeURIComponent(key)}/verdict`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ verdict, reviewer: reviewer ?? null }),
    });
  }

  leakageReport(): Promise<LeakageReport> {
    return this.request<LeakageReport>("/v1/reports/leakage");
  }

  imageUrl(imageId: string): string {
    return `${this.base}/v1/images/${encodeURIComponent(imageId)}`;
  }
}
