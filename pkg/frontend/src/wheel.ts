/**
 * Mood wheel: one SVG donut sector per mood around a central "regular flow"
 * button. Sectors come straight from GET /v1/moods, so the wheel renders
 * whatever the service offers rather than a hard-coded list.
 */

import { MoodInfo } from "./api";

const SIZE = 280;
const OUTER = 130;
const INNER = 58;
const CENTER_R = 48;

export type WheelPick = (moodId: string | null) => void;

function polar(radius: number, angle: number): [number, number] {
  return [
    SIZE / 2 + radius * Math.cos(angle),
    SIZE / 2 + radius * Math.sin(angle),
  ];
}

function sectorPath(a0: number, a1: number): string {
  const [x0, y0] = polar(OUTER, a0);
  const [x1, y1] = polar(OUTER, a1);
  const [x2, y2] = polar(INNER, a1);
  const [x3, y3] = polar(INNER, a0);
  const large = a1 - a0 > Math.PI ? 1 : 0;
  return [
    `M ${x0} ${y0}`,
    `A ${OUTER} ${OUTER} 0 ${large} 1 ${x1} ${y1}`,
    `L ${x2} ${y2}`,
    `A ${INNER} ${INNER} 0 ${large} 0 ${x3} ${y3}`,
    "Z",
  ].join(" ");
}

export function renderWheel(
  container: HTMLElement,
  moods: MoodInfo[],
  onPick: WheelPick,
): void {
  const ns = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(ns, "svg");
  svg.setAttribute("viewBox", `0 0 ${SIZE} ${SIZE}`);
  svg.setAttribute("class", "mood-wheel");
  svg.setAttribute("role", "menu");

  const step = (2 * Math.PI) / moods.length;
  moods.forEach((mood, i) => {
    const a0 = i * step - Math.PI / 2;
    const a1 = a0 + step;
    const sector = document.createElementNS(ns, "path");
    sector.setAttribute("d", sectorPath(a0, a1));
    sector.setAttribute("class", `wheel-sector sector-${i}`);
    sector.setAttribute("data-mood-id", mood.id);
    sector.setAttribute("role", "menuitem");
    sector.addEventListener("click", () => onPick(mood.id));

    const title = document.createElementNS(ns, "title");
    title.textContent = `${mood.name}: ${mood.description}`;
    sector.appendChild(title);
    svg.appendChild(sector);

    const [lx, ly] = polar((OUTER + INNER) / 2, (a0 + a1) / 2);
    const label = document.createElementNS(ns, "text");
    label.setAttribute("x", String(lx));
    label.setAttribute("y", String(ly));
    label.setAttribute("class", "wheel-label");
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("dominant-baseline", "middle");
    label.setAttribute("pointer-events", "none");
    label.textContent = mood.name;
    svg.appendChild(label);
  });

  const center = document.createElementNS(ns, "circle");
  center.setAttribute("cx", String(SIZE / 2));
  center.setAttribute("cy", String(SIZE / 2));
  center.setAttribute("r", String(CENTER_R));
  center.setAttribute("class", "wheel-center");
  center.setAttribute("data-regular", "true");
  center.setAttribute("role", "menuitem");
  center.addEventListener("click", () => onPick(null));
  const centerTitle = document.createElementNS(ns, "title");
  centerTitle.textContent = "Flow: no mood filter, pure taste";
  center.appendChild(centerTitle);
  svg.appendChild(center);

  const centerLabel = document.createElementNS(ns, "text");
  centerLabel.setAttribute("x", String(SIZE / 2));
  centerLabel.setAttribute("y", String(SIZE / 2));
  centerLabel.setAttribute("class", "wheel-label wheel-center-label");
  centerLabel.setAttribute("text-anchor", "middle");
  centerLabel.setAttribute("dominant-baseline", "middle");
  centerLabel.setAttribute("pointer-events", "none");
  centerLabel.textContent = "Flow";
  svg.appendChild(centerLabel);

  container.replaceChildren(svg);
}
