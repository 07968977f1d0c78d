import { MoodInfo, RadioApi } from "./api";
import { SessionController } from "./controller";
import { ProgressTimer, renderPlayer } from "./player";
import { renderWheel } from "./wheel";
import "./style.css";

const wheelHost = document.getElementById("wheel")!;
const playerHost = document.getElementById("player")!;
const userInput = document.getElementById("user-id") as HTMLInputElement;

const api = new RadioApi("");
let controller: SessionController | null = null;
let moods: MoodInfo[] = [];

const timer = new ProgressTimer(
  (fraction) => {
    const bar = document.getElementById("progress-bar");
    if (bar) bar.style.width = `${(fraction * 100).toFixed(1)}%`;
  },
  () => {
    void controller?.next();
  },
);
setInterval(() => timer.tick(), 250);

function showWheel(): void {
  timer.stop();
  playerHost.hidden = true;
  wheelHost.hidden = false;
  renderWheel(wheelHost, moods, (moodId) => {
    void startSession(moodId);
  });
}

async function startSession(moodId: string | null): Promise<void> {
  const userId = userInput.value.trim();
  if (!userId) {
    userInput.focus();
    return;
  }
  controller = new SessionController(api, userId);
  let lastSong: string | null = null;
  controller.subscribe((state) => {
    renderPlayer(playerHost, state, {
      onLike: () => void controller?.like(),
      onSkip: () => void controller?.skip(),
      onExcludeSong: () => void controller?.excludeSong(),
      onExcludeArtist: () => void controller?.excludeArtist(),
      onBackToWheel: showWheel,
    });
    const song = state.track?.song_id ?? null;
    if (song !== null && song !== lastSong) timer.restart();
    lastSong = song;
  });
  wheelHost.hidden = true;
  playerHost.hidden = false;
  await controller.start(moodId);
}

api
  .moods()
  .then((fetched) => {
    moods = fetched;
    showWheel();
  })
  .catch((err) => {
    wheelHost.textContent = `cannot reach the radio service: ${err}`;
  });
