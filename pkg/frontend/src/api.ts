/**
 * Thin client over the service endpoints. Every displayed value comes
 * from here; the UI computes no state of its own.
 */

import type {
  ImageDetail,
  ImagePage,
  MapMarker,
  MetricsSummary,
  QueueItem,
  TransitionEvent,
  VerdictInfo,
  ImageRecord,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  code: string;
  detail: string;

  constructor(status: number, code: string, message: string, detail = "") {
    super(message);
    this.status = status;
    this.code = code;
    this.detail = detail;
  }
}

export function newIdempotencyKey(): string {
  return crypto.randomUUID();
}

async function parseError(res: Response): Promise<ApiError> {
  let code = "HTTP_ERROR";
  let message = res.statusText || `request failed with ${res.status}`;
  let detail = "";
  try {
    const body = await res.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
      detail = body.detail ?? "";
    }
  } catch {
    // non-JSON error body; keep the status-line message
  }
  return new ApiError(res.status, code, message, detail);
}

export class ApiClient {
  base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) throw await parseError(res);
    return res.json() as Promise<T>;
  }

  listImages(state?: string, page = 1, pageSize = 200): Promise<ImagePage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (state) params.set("state", state);
    return this.get(`/api/images?${params}`);
  }

  getImage(imageId: string): Promise<ImageDetail> {
    return this.get(`/api/images/${encodeURIComponent(imageId)}`);
  }

  getHistory(imageId: string): Promise<{ events: TransitionEvent[] }> {
    return this.get(`/api/images/${encodeURIComponent(imageId)}/history`);
  }

  imageFileUrl(imageId: string): string {
    return `${this.base}/api/images/${encodeURIComponent(imageId)}/file`;
  }

  verificationQueue(): Promise<{ items: QueueItem[] }> {
    return this.get("/api/verification/queue");
  }

  mapMarkers(): Promise<MapMarker[]> {
    return this.get("/api/map");
  }

  metricsSummary(): Promise<MetricsSummary> {
    return this.get("/api/metrics/summary");
  }

  /**
   * POST a verdict. The idempotency key identifies one submission: a retry
   * of the same submission must pass the same key and gets the original
   * outcome back; a new submission must use a fresh key.
   */
  async submitVerdict(
    imageId: string,
    verdict: "correct" | "incorrect",
    reviewer: string,
    key: string,
    notes = "",
  ): Promise<{ record: ImageRecord; verdict: VerdictInfo }> {
    const res = await fetch(
      `${this.base}/api/verification/${encodeURIComponent(imageId)}`,
      {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          "Idempotency-Key": key,
        },
        body: JSON.stringify({ verdict, reviewer, notes }),
      },
    );
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async promoteStaging(imageIds: string[], key: string): Promise<unknown> {
    const res = await fetch(`${this.base}/api/staging/promote`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "Idempotency-Key": key,
      },
      body: JSON.stringify({ image_ids: imageIds }),
    });
    if (!res.ok) throw await parseError(res);
    return res.json();
  }
}
