import { describe, expect, it } from "vitest";

import { HistoryCursor } from "../src/history.js";
import { HistoryEntry, makeInteraction } from "../src/types.js";

function entry(tag: string): HistoryEntry {
  return {
    interaction: makeInteraction("bbox", { box: [0, 0, 1, 1] }),
    response: { mask: tag, alpha: tag, latency_ms: 1, model_id: "m" },
  };
}

describe("history navigation", () => {
  it("is disabled while empty", () => {
    const h = new HistoryCursor();
    expect(h.navigationEnabled()).toBe(false);
    expect(h.canGoBack()).toBe(false);
    expect(h.canGoForward()).toBe(false);
    expect(h.back()).toBeNull();
    expect(h.current()).toBeNull();
  });

  it("steps back to earlier results without re-querying", () => {
    const h = new HistoryCursor();
    h.push(entry("first"));
    h.push(entry("second"));
    expect(h.current()!.response.alpha).toBe("second");
    const shown = h.back();
    expect(shown!.response.alpha).toBe("first");
    expect(h.atHead()).toBe(false);
  });

  it("stepping forward to head re-enables drawing", () => {
    const h = new HistoryCursor();
    h.push(entry("first"));
    h.push(entry("second"));
    h.back();
    expect(h.atHead()).toBe(false);
    h.forward();
    expect(h.atHead()).toBe(true);
    expect(h.canGoForward()).toBe(false);
  });

  it("truncates at the cursor when a new entry is pushed", () => {
    const h = new HistoryCursor();
    h.push(entry("first"));
    h.push(entry("second"));
    h.back();
    h.push(entry("replacement"));
    expect(h.length).toBe(2);
    expect(h.current()!.response.alpha).toBe("replacement");
    expect(h.back()!.response.alpha).toBe("first");
    expect(h.forward()!.response.alpha).toBe("replacement");
  });
});
