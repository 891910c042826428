// Prediction history with a navigation cursor; stepping back re-displays
// stored results without re-querying the service.

import { HistoryEntry } from "./types.js";

export class HistoryCursor {
  private entries: HistoryEntry[] = [];
  private cursor = -1; // index of the displayed entry, -1 when empty

  get length(): number {
    return this.entries.length;
  }

  current(): HistoryEntry | null {
    return this.cursor >= 0 ? this.entries[this.cursor] : null;
  }

  /** Drawing a new interaction truncates anything beyond the cursor. */
  push(entry: HistoryEntry): void {
    this.entries = this.entries.slice(0, this.cursor + 1);
    this.entries.push(entry);
    this.cursor = this.entries.length - 1;
  }

  canGoBack(): boolean {
    return this.cursor > 0;
  }

  canGoForward(): boolean {
    return this.cursor >= 0 && this.cursor < this.entries.length - 1;
  }

  atHead(): boolean {
    return this.cursor === this.entries.length - 1;
  }

  back(): HistoryEntry | null {
    if (!this.canGoBack()) return null;
    this.cursor -= 1;
    return this.entries[this.cursor];
  }

  forward(): HistoryEntry | null {
    if (!this.canGoForward()) return null;
    this.cursor += 1;
    return this.entries[this.cursor];
  }

  navigationEnabled(): boolean {
    return this.entries.length > 0;
  }
}
