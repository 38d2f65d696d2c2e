import { NextResponse, ResponseBody, SessionInfo } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/**
 * Thin client for the collection service. Submissions are retried on network
 * failure with the original payload, so a connectivity hiccup never alters
 * the measured rt_ms.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly sleep: Sleep = defaultSleep,
    private readonly maxRetries: number = 3,
    private readonly retryDelayMs: number = 500,
  ) {}

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + url, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = body.message ?? body.error ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(subjectId: string): Promise<SessionInfo> {
    return this.json<SessionInfo>("/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ subject_id: subjectId }),
    });
  }

  nextQuestion(sessionId: string): Promise<NextResponse> {
    return this.json<NextResponse>(`/api/sessions/${sessionId}/next`);
  }

  async submitResponse(sessionId: string, body: ResponseBody): Promise<void> {
    const payload = JSON.stringify(body); // frozen before any retry
    let lastError: unknown;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      try {
        await this.json(`/api/sessions/${sessionId}/responses`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: payload,
        });
        return;
      } catch (error) {
        if (error instanceof ApiError) {
          throw error; // the server spoke; retrying cannot help
        }
        lastError = error; // network failure: buffered retry
        if (attempt < this.maxRetries) {
          await this.sleep(this.retryDelayMs);
        }
      }
    }
    throw lastError;
  }
}
