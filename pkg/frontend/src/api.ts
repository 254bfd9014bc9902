/** Typed client for the session service HTTP API. */

export interface SessionView {
  session_id: string;
  study_id: string;
  rater_id: string;
  phase: string;
  trial_count: number;
  responded: number;
  instructions: { cue_list: string[]; test_kind: string };
}

export interface TrialStimulus {
  stimulus_id: string;
  audio_url: string;
  duration_ms: number;
}

export type TestKind = "HFR" | "HFR_GRANULAR" | "MUSHRA";

export interface MarkerDef {
  marker_id: string;
  display: string;
}

export interface Trial {
  trial_id: string;
  index: number;
  total: number;
  test_kind: TestKind;
  stimuli: TrialStimulus[];
  coverage_tolerance_ms: number;
  response_schema: {
    labels?: string[];
    markers?: MarkerDef[];
    score_range?: [number, number];
  };
}

export interface TrialPayload {
  session_id: string;
  completed: boolean;
  trial: Trial | null;
}

export interface StimulusCoverage {
  covered_ms: number;
  duration_ms: number;
  complete: boolean;
}

export interface CoverageStatus {
  session_id: string;
  trial_id: string;
  covered_ms: number;
  required_ms: number;
  complete: boolean;
  stimuli: Record<string, StimulusCoverage>;
  rejected?: { index: number; reason: string }[];
}

export interface PlaybackEvent {
  stimulus_id: string;
  start_ms: number;
  end_ms: number;
  client_ts?: number;
}

export type ResponseBody =
  | { label: "human" | "tts"; markers?: string[] }
  | { scores: Record<string, number> };

export interface SubmitAck {
  status: string;
  session_id: string;
  trial_id: string;
  response_time_ms: number;
  next_trial_id: string | null;
  completed: boolean;
  remaining: number;
}

export interface CompletionView {
  session_id: string;
  completion_code: string;
  redirect_url: string | null;
}

export interface ProgressView {
  study_id: string;
  systems: Record<string, { collected: number; target: number }>;
  sessions: { created: number; in_progress: number; completed: number; redeemed: number };
  rush: { flagged: number; responses: number; rate_pct: number };
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: Record<string, unknown>,
  ) {
    super(`${status}: ${body["detail"] ?? body["error"] ?? "request failed"}`);
  }

  get code(): string {
    return String(this.body["error"] ?? "");
  }
}

/** The surface views depend on; tests substitute mocks, ApiClient is the
 * HTTP implementation. */
export interface Api {
  createSession(studyId: string, raterToken: string, participantId: string): Promise<SessionView>;
  acknowledgeInstructions(sessionId: string): Promise<SessionView>;
  currentTrial(sessionId: string): Promise<TrialPayload>;
  recordPlayback(sessionId: string, trialId: string, events: PlaybackEvent[]): Promise<CoverageStatus>;
  submitResponse(sessionId: string, trialId: string, body: ResponseBody, retries?: number): Promise<SubmitAck>;
  completeSession(sessionId: string): Promise<CompletionView>;
  studyProgress(studyId: string, operatorToken?: string): Promise<ProgressView>;
}

export class ApiClient implements Api {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown, headers?: Record<string, string>): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json", ...headers },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const parsed = (await response.json().catch(() => ({}))) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(response.status, parsed);
    }
    return parsed as T;
  }

  createSession(studyId: string, raterToken: string, participantId: string): Promise<SessionView> {
    return this.request("POST", "/v1/sessions", {
      study_id: studyId,
      rater_token: raterToken,
      participant_id: participantId,
    });
  }

  acknowledgeInstructions(sessionId: string): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/instructions`);
  }

  currentTrial(sessionId: string): Promise<TrialPayload> {
    return this.request("GET", `/v1/sessions/${sessionId}/trial`);
  }

  recordPlayback(sessionId: string, trialId: string, events: PlaybackEvent[]): Promise<CoverageStatus> {
    return this.request("POST", `/v1/sessions/${sessionId}/trials/${trialId}/playback`, { events });
  }

  /** Submission is idempotent server-side, so network failures just retry. */
  async submitResponse(sessionId: string, trialId: string, body: ResponseBody, retries = 2): Promise<SubmitAck> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= retries; attempt++) {
      try {
        return await this.request<SubmitAck>(
          "POST",
          `/v1/sessions/${sessionId}/trials/${trialId}/response`,
          { response: body },
        );
      } catch (error) {
        if (error instanceof ApiError) throw error; // a real answer, not a glitch
        lastError = error;
      }
    }
    throw lastError;
  }

  completeSession(sessionId: string): Promise<CompletionView> {
    return this.request("POST", `/v1/sessions/${sessionId}/complete`);
  }

  studyProgress(studyId: string, operatorToken?: string): Promise<ProgressView> {
    const headers = operatorToken ? { "x-operator-token": operatorToken } : undefined;
    return this.request("GET", `/v1/studies/${studyId}/progress`, undefined, headers);
  }
}
