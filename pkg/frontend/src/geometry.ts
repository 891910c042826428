// Pointer-geometry logic, kept free of DOM types so it unit-tests cleanly.
// All coordinates live in image pixel space (row, col), origin top-left.

import { Box, Interaction, PointEntry, Role, StrokeRuns, makeInteraction } from "./types.js";

export const RLE_STRIDE = 65536;

export interface Pixel {
  row: number;
  col: number;
}

export function clampPixel(p: Pixel, height: number, width: number): Pixel {
  return {
    row: Math.min(Math.max(Math.round(p.row), 0), height - 1),
    col: Math.min(Math.max(Math.round(p.col), 0), width - 1),
  };
}

/** Drag corners in any order -> ordered box. */
export function normalizeBox(a: Pixel, b: Pixel): Box {
  return [
    Math.min(a.row, b.row),
    Math.min(a.col, b.col),
    Math.max(a.row, b.row),
    Math.max(a.col, b.col),
  ];
}

export function bresenhamLine(a: Pixel, b: Pixel): Pixel[] {
  const pixels: Pixel[] = [];
  let { row: r0, col: c0 } = a;
  const { row: r1, col: c1 } = b;
  const dr = Math.abs(r1 - r0);
  const dc = Math.abs(c1 - c0);
  const sr = r0 < r1 ? 1 : -1;
  const sc = c0 < c1 ? 1 : -1;
  let err = dc - dr;
  for (;;) {
    pixels.push({ row: r0, col: c0 });
    if (r0 === r1 && c0 === c1) break;
    const e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      c0 += sc;
    }
    if (e2 < dc) {
      err += dc;
      r0 += sr;
    }
  }
  return pixels;
}

/** Run-length encoding matching the service: sorted flat indices merged
 * into [start, length] runs. */
export function encodeStroke(pixels: Pixel[]): StrokeRuns {
  const flat = [...new Set(pixels.map((p) => p.row * RLE_STRIDE + p.col))].sort(
    (x, y) => x - y,
  );
  const runs: StrokeRuns = [];
  let start = flat[0];
  let prev = flat[0];
  for (const v of flat.slice(1)) {
    if (v === prev + 1) {
      prev = v;
      continue;
    }
    runs.push([start, prev - start + 1]);
    start = prev = v;
  }
  runs.push([start, prev - start + 1]);
  return runs;
}

export function decodeStroke(runs: StrokeRuns): Pixel[] {
  const pixels: Pixel[] = [];
  for (const [start, length] of runs) {
    for (let flat = start; flat < start + length; flat++) {
      pixels.push({ row: Math.floor(flat / RLE_STRIDE), col: flat % RLE_STRIDE });
    }
  }
  return pixels;
}

export type ToolKind = "fg_point" | "fg_bg_points" | "bbox" | "extreme_points" | "scribble";

export const EXTREME_PROMPTS = ["top", "bottom", "left-most", "right-most"] as const;

const MIN_SCRIBBLE_PIXELS = 3;

/** Accumulates pointer events for the active tool and emits the shared
 * interaction JSON once the geometry is complete. */
export class DrawState {
  readonly tool: ToolKind;
  private readonly height: number;
  private readonly width: number;
  points: PointEntry[] = [];
  dragStart: Pixel | null = null;
  dragCurrent: Pixel | null = null;
  trail: Pixel[] = [];
  clamped = false;

  constructor(tool: ToolKind, height: number, width: number) {
    this.tool = tool;
    this.height = height;
    this.width = width;
  }

  private clamp(p: Pixel): Pixel {
    const q = clampPixel(p, this.height, this.width);
    if (q.row !== Math.round(p.row) || q.col !== Math.round(p.col)) this.clamped = true;
    return q;
  }

  pointerDown(p: Pixel, role: Role = "fg"): void {
    const q = this.clamp(p);
    switch (this.tool) {
      case "bbox":
        this.dragStart = q;
        this.dragCurrent = q;
        break;
      case "scribble":
        this.trail = [q];
        break;
      case "fg_point":
        this.points = [[q.row, q.col, "fg"]];
        break;
      case "fg_bg_points":
        this.points.push([q.row, q.col, role]);
        break;
      case "extreme_points":
        if (this.points.length < 4) this.points.push([q.row, q.col, "extreme"]);
        break;
    }
  }

  pointerMove(p: Pixel): void {
    const q = this.clamp(p);
    if (this.tool === "bbox" && this.dragStart) {
      this.dragCurrent = q;
    } else if (this.tool === "scribble" && this.trail.length > 0) {
      const last = this.trail[this.trail.length - 1];
      this.trail.push(...bresenhamLine(last, q).slice(1));
    }
  }

  pointerUp(p: Pixel): void {
    this.pointerMove(p);
  }

  nextExtremePrompt(): string | null {
    return this.points.length < 4 ? EXTREME_PROMPTS[this.points.length] : null;
  }

  scribblePixelCount(): number {
    return new Set(this.trail.map((p) => p.row * RLE_STRIDE + p.col)).size;
  }

  /** Null while the geometry is incomplete (e.g. scribble under 3 pixels). */
  buildInteraction(): Interaction | null {
    switch (this.tool) {
      case "bbox":
        if (!this.dragStart || !this.dragCurrent) return null;
        return makeInteraction("bbox", { box: normalizeBox(this.dragStart, this.dragCurrent) });
      case "fg_point":
        if (this.points.length !== 1) return null;
        return makeInteraction("fg_point", { points: this.points });
      case "fg_bg_points": {
        const fg = this.points.filter((p) => p[2] === "fg");
        const bg = this.points.filter((p) => p[2] === "bg");
        if (fg.length !== 1 || bg.length !== 4) return null;
        return makeInteraction("fg_bg_points", { points: [...fg, ...bg] });
      }
      case "extreme_points":
        if (this.points.length !== 4) return null;
        return makeInteraction("extreme_points", { points: this.points });
      case "scribble":
        if (this.scribblePixelCount() < MIN_SCRIBBLE_PIXELS) return null;
        return makeInteraction("scribble", { stroke: encodeStroke(this.trail) });
    }
  }
}
