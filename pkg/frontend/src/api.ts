/**
 * Typed client for the review service JSON API.
 *
 * Every call maps 1:1 to a service route; errors surface as ApiError with
 * the HTTP status and the parsed `detail` payload so callers can react to
 * 409 phase conflicts and 422 validation rejections.
 */

export interface WireBox {
  class_id: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface WirePrediction extends WireBox {
  confidence: number;
  pre_accepted: boolean;
}

export interface PredictionsResponse {
  image_id: string;
  stem: string;
  width: number;
  height: number;
  boxes: WirePrediction[];
}

export type ItemState = "pending" | "edited" | "accepted";

export interface ItemStatus {
  image_id: string;
  stem: string;
  status: ItemState;
  predictions: number;
  pre_accepted: boolean;
}

export interface SessionInfo {
  iteration: number;
  phase: string;
  total: number;
  pending: number;
  edited: number;
  accepted: number;
  auto_accept_confidence: number | null;
}

export interface FinalizeResponse {
  merged: number;
  iteration: number;
  phase: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

export interface ReviewApi {
  session(): Promise<SessionInfo>;
  items(): Promise<ItemStatus[]>;
  predictions(imageId: string): Promise<PredictionsResponse>;
  labelMap(): Promise<string[]>;
  putLabels(imageId: string, boxes: WireBox[]): Promise<ItemStatus>;
  accept(imageId: string): Promise<ItemStatus>;
  finalize(): Promise<FinalizeResponse>;
  imageUrl(imageId: string): string;
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  let body: unknown = null;
  const text = await response.text();
  if (text) {
    try {
      body = JSON.parse(text);
    } catch {
      body = text;
    }
  }
  if (!response.ok) {
    const detail =
      body && typeof body === "object" && "detail" in (body as Record<string, unknown>)
        ? (body as Record<string, unknown>).detail
        : body;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class HttpApi implements ReviewApi {
  constructor(private base: string = "") {}

  session(): Promise<SessionInfo> {
    return request(`${this.base}/api/session`);
  }

  items(): Promise<ItemStatus[]> {
    return request(`${this.base}/api/items`);
  }

  predictions(imageId: string): Promise<PredictionsResponse> {
    return request(`${this.base}/api/items/${imageId}/predictions`);
  }

  async labelMap(): Promise<string[]> {
    const body = await request<{ names: string[] }>(`${this.base}/api/labelmap`);
    return body.names;
  }

  putLabels(imageId: string, boxes: WireBox[]): Promise<ItemStatus> {
    return request(`${this.base}/api/items/${imageId}/labels`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ boxes }),
    });
  }

  accept(imageId: string): Promise<ItemStatus> {
    return request(`${this.base}/api/items/${imageId}/accept`, { method: "POST" });
  }

  finalize(): Promise<FinalizeResponse> {
    return request(`${this.base}/api/finalize`, { method: "POST" });
  }

  imageUrl(imageId: string): string {
    return `${this.base}/api/items/${imageId}/image`;
  }
}
