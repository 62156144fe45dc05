// Client-side session state: the local prompt list (mirroring the server),
// the class palette, and review filters.

import type { PromptItem } from "./api";

export const CLASS_COLORS = ["#ffd400", "#3fb6ff", "#ff5f87", "#6bff95", "#c792ff", "#ff9e3f"];

export function classColor(label: number): string {
  return CLASS_COLORS[(label - 1) % CLASS_COLORS.length];
}

export type PromptState = {
  items: PromptItem[];
  activeClass: number;
  diameters: Map<number, number>; // per-class diameter slider values
  zeroOnlyMode: boolean;
};

export function initialPromptState(): PromptState {
  return { items: [], activeClass: 1, diameters: new Map([[1, 12]]), zeroOnlyMode: false };
}

export function diameterFor(state: PromptState, label: number): number {
  return state.diameters.get(label) ?? 12;
}

export function setDiameter(state: PromptState, label: number, d: number): void {
  if (d > 0) state.diameters.set(label, d);
}

/** Build the prompt for a click at image coordinates, honoring the 0-only
 * mode: clicks on other tilts are rejected (returns null). */
export function promptFromClick(
  state: PromptState,
  tiltIndex: number,
  zeroTiltIndex: number,
  imgX: number,
  imgY: number,
): PromptItem | null {
  if (state.zeroOnlyMode && tiltIndex !== zeroTiltIndex) return null;
  return {
    tilt_index: tiltIndex,
    x: imgX,
    y: imgY,
    d: diameterFor(state, state.activeClass),
    class: state.activeClass,
  };
}

export function addPrompt(state: PromptState, item: PromptItem): void {
  state.items.push(item);
}

export function removePrompt(state: PromptState, index: number): PromptItem | undefined {
  return state.items.splice(index, 1)[0];
}

export function clearPrompts(state: PromptState): void {
  state.items = [];
}

export type ReviewState = {
  scoreThreshold: number;
  hiddenClasses: Set<number>;
};

export function initialReviewState(): ReviewState {
  return { scoreThreshold: 0.3, hiddenClasses: new Set() };
}

export function toggleClass(review: ReviewState, label: number): void {
  if (review.hiddenClasses.has(label)) review.hiddenClasses.delete(label);
  else review.hiddenClasses.add(label);
}
