/** Typed client for the session service. The fetch implementation is
 * injectable so tests can run against a stubbed server. */

import type {
  BatchResponse,
  CreateSessionRequest,
  ExportResponse,
  Label,
  StatusResponse,
  SubmitLabelsResponse,
  WireError,
} from "./types.js";

/** A structured error surfaced by the service ({error, detail, fields?}). */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    public readonly detail: string,
    public readonly fields: string[] = [],
  ) {
    super(`${code}: ${detail}`);
  }
}

/** Transport-level failure (server unreachable, response not JSON). */
export class NetworkError extends Error {}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
  let body: WireError | null = null;
  try {
    body = (await response.json()) as WireError;
  } catch {
    // fall through to a generic error below
  }
  if (body && typeof body.error === "string") {
    return new ApiError(response.status, body.error, body.detail ?? "", body.fields ?? []);
  }
  return new ApiError(response.status, "http_error", `HTTP ${response.status}`);
}

export class SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      throw new NetworkError(`request to ${path} failed: ${String(cause)}`);
    }
    if (!response.ok) {
      throw await parseError(response);
    }
    try {
      return (await response.json()) as T;
    } catch (cause) {
      throw new NetworkError(`response from ${path} is not JSON: ${String(cause)}`);
    }
  }

  createSession(body: CreateSessionRequest): Promise<{ session_id: string }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getBatch(sessionId: string): Promise<BatchResponse> {
    return this.request(`/sessions/${sessionId}/batch`);
  }

  submitLabels(
    sessionId: string,
    labels: Array<{ doc_id: string; label: Label }>,
  ): Promise<SubmitLabelsResponse> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ labels }),
    });
  }

  getStatus(sessionId: string): Promise<StatusResponse> {
    return this.request(`/sessions/${sessionId}/status`);
  }

  getExport(sessionId: string): Promise<ExportResponse> {
    return this.request(`/sessions/${sessionId}/export`);
  }
}
