// Wire types shared with the matting service. Field order and null/empty
// conventions must match the server's serialization byte for byte.

export type Role = "fg" | "bg" | "extreme";

export type InteractionKind =
  | "fg_point"
  | "fg_bg_points"
  | "bbox"
  | "extreme_points"
  | "scribble"
  | "trimap";

/** [row, col, role] triple in image pixel coordinates. */
export type PointEntry = [number, number, Role];

/** Inclusive corners [r0, c0, r1, c1] with r0 <= r1 and c0 <= c1. */
export type Box = [number, number, number, number];

/** Row-major run-length runs [start, length] over row * 65536 + col. */
export type StrokeRuns = [number, number][];

export interface Interaction {
  kind: InteractionKind;
  points: PointEntry[];
  box: Box | null;
  stroke: StrokeRuns | null;
  trimap: string | null;
}

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
}

export interface PredictResponse {
  mask: string; // base64 PNG
  alpha: string; // base64 PNG
  latency_ms: number;
  model_id: string;
}

export interface HistoryEntry {
  interaction: Interaction;
  response: PredictResponse;
}

/** Canonical JSON: key order kind, points, box, stroke, trimap; no spaces. */
export function serializeInteraction(interaction: Interaction): string {
  return JSON.stringify({
    kind: interaction.kind,
    points: interaction.points,
    box: interaction.box,
    stroke: interaction.stroke,
    trimap: interaction.trimap,
  });
}

export function makeInteraction(
  kind: InteractionKind,
  fields: Partial<Omit<Interaction, "kind">> = {},
): Interaction {
  return {
    kind,
    points: fields.points ?? [],
    box: fields.box ?? null,
    stroke: fields.stroke ?? null,
    trimap: fields.trimap ?? null,
  };
}
