/**
 * Player view: current track card, queue preview, feedback buttons, and a
 * simulated progress bar. There is no audio here; the progress timer just
 * walks a fixed track length and asks for the next track when it finishes.
 */

import { Track } from "./api";
import { PlayerState } from "./controller";

export interface PlayerHandlers {
  onLike: () => void;
  onSkip: () => void;
  onExcludeSong: () => void;
  onExcludeArtist: () => void;
  onBackToWheel: () => void;
}

export const TRACK_LENGTH_MS = 30_000;

type Clock = () => number;

/** Fake playback clock: 0..1 over a fixed track length, then one onComplete. */
export class ProgressTimer {
  private startedAt: number | null = null;
  private completed = false;

  constructor(
    private readonly onTick: (fraction: number) => void,
    private readonly onComplete: () => void,
    private readonly lengthMs: number = TRACK_LENGTH_MS,
    private readonly clock: Clock = () => Date.now(),
  ) {}

  /** (Re)start from zero, e.g. when a new track arrives. */
  restart(): void {
    this.startedAt = this.clock();
    this.completed = false;
    this.onTick(0);
  }

  stop(): void {
    this.startedAt = null;
  }

  /** Advance to the current clock; call from an interval or rAF loop. */
  tick(): void {
    if (this.startedAt === null || this.completed) return;
    const fraction = Math.min(1, (this.clock() - this.startedAt) / this.lengthMs);
    this.onTick(fraction);
    if (fraction >= 1) {
      this.completed = true;
      this.onComplete();
    }
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function trackCard(track: Track): HTMLElement {
  const card = el("div", "track-card");
  card.dataset.songId = track.song_id;
  card.appendChild(el("div", "track-title", track.title));
  card.appendChild(el("div", "track-artist", track.artist));
  if (track.mood_score !== undefined) {
    card.appendChild(
      el("div", "track-score", `mood fit ${(track.mood_score * 100).toFixed(0)}%`),
    );
  }
  return card;
}

export function renderPlayer(
  container: HTMLElement,
  state: PlayerState,
  handlers: PlayerHandlers,
): void {
  const root = el("div", "player");

  const header = el("div", "player-header");
  header.appendChild(
    el("span", "player-mood", state.moodId === null ? "Flow" : state.moodId),
  );
  if (state.fallbackActive) {
    header.appendChild(el("span", "fallback-badge", "editorial picks"));
  }
  const back = el("button", "btn btn-back", "change mood");
  back.addEventListener("click", handlers.onBackToWheel);
  header.appendChild(back);
  root.appendChild(header);

  if (state.phase === "error") {
    root.appendChild(el("div", "player-error", state.error ?? "something broke"));
  }

  if (state.track !== null) {
    root.appendChild(trackCard(state.track));

    const progress = el("div", "progress");
    const bar = el("div", "progress-bar");
    bar.id = "progress-bar";
    progress.appendChild(bar);
    root.appendChild(progress);

    const controls = el("div", "controls");
    const buttons: [string, string, () => void][] = [
      ["btn-like", "like", handlers.onLike],
      ["btn-skip", "skip", handlers.onSkip],
      ["btn-exclude-song", "never this song", handlers.onExcludeSong],
      ["btn-exclude-artist", "never this artist", handlers.onExcludeArtist],
    ];
    for (const [cls, label, handler] of buttons) {
      const button = el("button", `btn ${cls}`, label);
      button.addEventListener("click", handler);
      controls.appendChild(button);
    }
    root.appendChild(controls);
  }

  const queue = el("div", "queue");
  queue.appendChild(el("div", "queue-title", "coming up"));
  for (const track of state.queuePreview) {
    const row = el("div", "queue-row", `${track.title} · ${track.artist}`);
    row.dataset.songId = track.song_id;
    queue.appendChild(row);
  }
  root.appendChild(queue);

  root.appendChild(
    el(
      "div",
      "player-footer",
      `${state.historyLength} played · model ${state.modelVersion ?? "?"}`,
    ),
  );

  container.replaceChildren(root);
}
