/** Wire types for the /v1 API. */

export interface ExpandCandidate {
  expansion: string;
  score: number;
  frequency: number;
}

export interface ExpandSlotPayload {
  index: number;
  short_form: string | null;
  candidates: ExpandCandidate[];
}

export interface ExpandResponse {
  request_id: string;
  profile: string;
  adapter_version: number;
  slots: ExpandSlotPayload[];
}

export interface FeedbackPayload {
  request_id: string;
  slot: number;
  profile: string;
  chosen: number | string;
  source?: string;
}

export interface FeedbackResponse {
  status: string;
  profile: string;
  request_id: string;
  slot: number;
  chosen: number;
}

export interface PersonalizeResponse {
  status: string;
  profile: string;
  adapter_version: number;
  feedback_count: number;
}

export interface HealthResponse {
  status: string;
  version: string;
  profiles: Record<string, { adapter_version: number }>;
}
