/**
 * Headless session state machine behind the player view.
 *
 * All session-mutating calls funnel through a single in-flight gate: while
 * one mutation is running, further ones are dropped (the UI just ignores the
 * extra click). After every mutation the controller re-reads the session
 * summary, so the rendered state always matches what the service would
 * report, never an optimistic guess.
 */

import {
  ApiError,
  FeedbackKind,
  newEventId,
  RadioApi,
  SessionSummary,
  Track,
} from "./api";

export type Phase = "idle" | "loading" | "playing" | "error";

export interface PlayerState {
  phase: Phase;
  sessionId: string | null;
  moodId: string | null; // null while on the regular flow
  track: Track | null;
  fallbackActive: boolean;
  queuePreview: Track[];
  historyLength: number;
  excludedSongs: string[];
  excludedArtists: string[];
  artistWeights: Record<string, number>;
  modelVersion: string | null;
  error: string | null;
}

const INITIAL: PlayerState = {
  phase: "idle",
  sessionId: null,
  moodId: null,
  track: null,
  fallbackActive: false,
  queuePreview: [],
  historyLength: 0,
  excludedSongs: [],
  excludedArtists: [],
  artistWeights: {},
  modelVersion: null,
  error: null,
};

export type Listener = (state: PlayerState) => void;

export class SessionController {
  private state: PlayerState = { ...INITIAL };
  private listeners: Listener[] = [];
  private inflight = false;

  constructor(
    private readonly api: RadioApi,
    private readonly userId: string,
  ) {}

  getState(): PlayerState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  /** Open a session; moodId null means the unconditioned regular flow. */
  start(moodId: string | null, seed?: number): Promise<boolean> {
    return this.mutate(async () => {
      this.setState({ ...INITIAL, phase: "loading", moodId });
      const opened = await this.api.openSession(this.userId, moodId, seed);
      const summary = await this.api.summary(opened.session_id);
      this.applySummary(summary);
    });
  }

  next(): Promise<boolean> {
    return this.mutate(async () => {
      const sessionId = this.requireSession();
      await this.api.nextTrack(sessionId);
      this.applySummary(await this.api.summary(sessionId));
    });
  }

  /** Bump the current artist; the track keeps playing. */
  like(): Promise<boolean> {
    return this.feedbackThen("like", false);
  }

  /** Penalize and advance: skip feedback first, then the next track. */
  skip(): Promise<boolean> {
    return this.feedbackThen("skip", true);
  }

  /** Drop the current song for the rest of the session and advance. */
  excludeSong(): Promise<boolean> {
    return this.feedbackThen("exclude_song", true);
  }

  /** Drop the current artist for the rest of the session and advance. */
  excludeArtist(): Promise<boolean> {
    return this.feedbackThen("exclude_artist", true);
  }

  private feedbackThen(kind: FeedbackKind, advance: boolean): Promise<boolean> {
    return this.mutate(async () => {
      const sessionId = this.requireSession();
      const track = this.state.track;
      if (track === null) throw new Error("no current track");
      await this.api.sendFeedback(sessionId, kind, track.song_id, newEventId());
      if (advance) await this.api.nextTrack(sessionId);
      this.applySummary(await this.api.summary(sessionId));
    });
  }

  /** Runs one mutation; returns false when another is already in flight. */
  private async mutate(action: () => Promise<void>): Promise<boolean> {
    if (this.inflight) return false;
    this.inflight = true;
    try {
      await action();
      return true;
    } catch (err) {
      const message =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      this.setState({ ...this.state, phase: "error", error: message });
      return true;
    } finally {
      this.inflight = false;
    }
  }

  private requireSession(): string {
    if (this.state.sessionId === null) throw new Error("no open session");
    return this.state.sessionId;
  }

  private applySummary(summary: SessionSummary): void {
    this.setState({
      phase: "playing",
      sessionId: summary.session_id,
      moodId: summary.mood,
      track: summary.current_track,
      fallbackActive: summary.fallback_active,
      queuePreview: summary.queue_preview,
      historyLength: summary.history_length,
      excludedSongs: summary.excluded_songs,
      excludedArtists: summary.excluded_artists,
      artistWeights: summary.artist_weights,
      modelVersion: summary.model_version,
      error: null,
    });
  }

  private setState(next: PlayerState): void {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }
}
