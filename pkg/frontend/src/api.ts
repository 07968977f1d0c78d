/**
 * Typed client for the moodradio HTTP API (the /v1 routes).
 *
 * The fetch implementation is injectable so tests can run without a server
 * and so the client works in both browser and node contexts.
 */

export interface MoodInfo {
  id: string;
  name: string;
  description: string;
}

export interface Track {
  song_id: string;
  title: string;
  artist: string;
  artist_id: string;
  mood_score?: number;
}

export interface OpenSessionResponse {
  session_id: string;
  track: Track;
  fallback_active: boolean;
  model_version: string;
}

export interface NextTrackResponse {
  track: Track;
  fallback_active: boolean;
}

export interface FeedbackResponse {
  ok: boolean;
  artist_weight?: number;
}

export interface SessionSummary {
  session_id: string;
  user_id: string;
  mood: string | null;
  threshold: number;
  fallback_active: boolean;
  model_version: string;
  current_track: Track | null;
  queue_preview: Track[];
  history_length: number;
  artist_weights: Record<string, number>;
  excluded_songs: string[];
  excluded_artists: string[];
}

export type FeedbackKind = "like" | "skip" | "exclude_song" | "exclude_artist";

/** Error body the service returns: { code, message } plus the HTTP status. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class RadioApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  moods(): Promise<MoodInfo[]> {
    return this.request<MoodInfo[]>("GET", "/v1/moods");
  }

  openSession(
    userId: string,
    moodId: string | null,
    seed?: number,
  ): Promise<OpenSessionResponse> {
    const body: Record<string, unknown> = { user_id: userId };
    if (moodId !== null) body.mood = moodId;
    if (seed !== undefined) body.seed = seed;
    return this.request<OpenSessionResponse>("POST", "/v1/session", body);
  }

  nextTrack(sessionId: string): Promise<NextTrackResponse> {
    return this.request<NextTrackResponse>(
      "POST",
      `/v1/session/${encodeURIComponent(sessionId)}/next`,
      {},
    );
  }

  sendFeedback(
    sessionId: string,
    kind: FeedbackKind,
    songId: string,
    eventId: string,
  ): Promise<FeedbackResponse> {
    return this.request<FeedbackResponse>(
      "POST",
      `/v1/session/${encodeURIComponent(sessionId)}/feedback`,
      { kind, song_id: songId, event_id: eventId },
    );
  }

  summary(sessionId: string): Promise<SessionSummary> {
    return this.request<SessionSummary>(
      "GET",
      `/v1/session/${encodeURIComponent(sessionId)}`,
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      let code = "http_error";
      let message = `HTTP ${response.status}`;
      try {
        const payload = await response.json();
        if (payload && typeof payload.code === "string") code = payload.code;
        if (payload && typeof payload.message === "string") message = payload.message;
      } catch {
        // non-JSON error body; keep the status fallback
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }
}

/** Unique idempotency id for one feedback action. */
export function newEventId(): string {
  return `evt-${Date.now()}-${Math.random().toString(36).slice(2, 11)}`;
}
