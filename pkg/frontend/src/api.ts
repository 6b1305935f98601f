/** Thin typed client for the /v1 API; fetch is injectable for tests. */

import type {
  ExpandResponse,
  FeedbackPayload,
  FeedbackResponse,
  HealthResponse,
  PersonalizeResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ExpandParams {
  text: string;
  profile: string;
  top_k?: number;
  pool_limit?: number;
  options?: string[][];
}

export interface PersonalizeParams {
  profile: string;
  epochs?: number;
  learning_rate?: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.unwrap<T>(response);
  }

  private async unwrap<T>(response: Response): Promise<T> {
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof payload === "object" && payload !== null && "error" in payload
          ? String((payload as { error: unknown }).error)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  expand(params: ExpandParams): Promise<ExpandResponse> {
    return this.post<ExpandResponse>("/v1/expand", params);
  }

  feedback(payload: FeedbackPayload): Promise<FeedbackResponse> {
    return this.post<FeedbackResponse>("/v1/feedback", payload);
  }

  personalize(params: PersonalizeParams): Promise<PersonalizeResponse> {
    return this.post<PersonalizeResponse>("/v1/personalize/train", params);
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/health`);
    return this.unwrap<HealthResponse>(response);
  }
}
