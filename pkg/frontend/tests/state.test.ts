import { describe, expect, it } from "vitest";
import {
  addPrompt,
  clearPrompts,
  diameterFor,
  initialPromptState,
  initialReviewState,
  promptFromClick,
  removePrompt,
  setDiameter,
  toggleClass,
} from "../src/state";
import { visibleBoxes } from "../src/overlay";
import type { OverlayBox } from "../src/api";

describe("prompt state", () => {
  it("builds a prompt from a click with the class diameter", () => {
    const s = initialPromptState();
    s.activeClass = 2;
    setDiameter(s, 2, 9);
    const p = promptFromClick(s, 3, 20, 10.5, 11.25);
    expect(p).toEqual({ tilt_index: 3, x: 10.5, y: 11.25, d: 9, class: 2 });
  });

  it("zero-only mode rejects clicks on other tilts", () => {
    const s = initialPromptState();
    s.zeroOnlyMode = true;
    expect(promptFromClick(s, 3, 20, 1, 1)).toBeNull();
    expect(promptFromClick(s, 20, 20, 1, 1)).not.toBeNull();
  });

  it("add, remove, clear keep the list consistent", () => {
    const s = initialPromptState();
    const a = promptFromClick(s, 0, 0, 1, 1)!;
    const b = promptFromClick(s, 1, 0, 2, 2)!;
    addPrompt(s, a);
    addPrompt(s, b);
    expect(s.items).toHaveLength(2);
    expect(removePrompt(s, 0)).toEqual(a);
    expect(s.items).toEqual([b]);
    clearPrompts(s);
    expect(s.items).toEqual([]);
  });

  it("falls back to a default diameter for unseen classes", () => {
    const s = initialPromptState();
    expect(diameterFor(s, 17)).toBeGreaterThan(0);
  });
});

describe("review filters", () => {
  const boxes: OverlayBox[] = [
    { tilt_index: 0, x: 1, y: 1, d: 4, class: 1, score: 0.9 },
    { tilt_index: 0, x: 2, y: 2, d: 4, class: 1, score: 0.15 },
    { tilt_index: 0, x: 3, y: 3, d: 4, class: 2, score: 0.8 },
  ];

  it("threshold at 1.0 hides all boxes", () => {
    const r = initialReviewState();
    r.scoreThreshold = 1.0;
    expect(visibleBoxes(boxes, r)).toHaveLength(0);
  });

  it("filters by score and class toggles", () => {
    const r = initialReviewState();
    expect(visibleBoxes(boxes, r)).toHaveLength(2);
    toggleClass(r, 2);
    expect(visibleBoxes(boxes, r)).toHaveLength(1);
    toggleClass(r, 2);
    expect(visibleBoxes(boxes, r)).toHaveLength(2);
  });
});
