import { describe, expect, it, vi } from "vitest";

import { MoodInfo } from "../src/api";
import { renderWheel } from "../src/wheel";

const SIX_MOODS: MoodInfo[] = [
  { id: "motivation", name: "Motivation", description: "push" },
  { id: "chill", name: "Chill", description: "rest" },
  { id: "focus", name: "Focus", description: "work" },
  { id: "party", name: "Party", description: "dance" },
  { id: "melancholy", name: "Melancholy", description: "rain" },
  { id: "you_and_me", name: "YouAndMe", description: "us" },
];

describe("renderWheel", () => {
  it("renders one sector per served mood plus the regular center", () => {
    const host = document.createElement("div");
    renderWheel(host, SIX_MOODS, () => {});

    const sectors = host.querySelectorAll("[data-mood-id]");
    expect(sectors.length).toBe(6);
    expect([...sectors].map((s) => s.getAttribute("data-mood-id"))).toEqual(
      SIX_MOODS.map((m) => m.id),
    );
    expect(host.querySelectorAll("[data-regular]").length).toBe(1);
  });

  it("does not assume six: a different mood count still fills the circle", () => {
    const host = document.createElement("div");
    renderWheel(host, SIX_MOODS.slice(0, 4), () => {});
    expect(host.querySelectorAll("[data-mood-id]").length).toBe(4);
  });

  it("reports the picked mood id, and null for the center", () => {
    const host = document.createElement("div");
    const onPick = vi.fn();
    renderWheel(host, SIX_MOODS, onPick);

    (host.querySelector('[data-mood-id="party"]') as SVGElement).dispatchEvent(
      new MouseEvent("click"),
    );
    (host.querySelector("[data-regular]") as SVGElement).dispatchEvent(
      new MouseEvent("click"),
    );
    expect(onPick.mock.calls).toEqual([["party"], [null]]);
  });

  it("replaces previous contents instead of stacking wheels", () => {
    const host = document.createElement("div");
    renderWheel(host, SIX_MOODS, () => {});
    renderWheel(host, SIX_MOODS, () => {});
    expect(host.querySelectorAll("svg").length).toBe(1);
  });
});
