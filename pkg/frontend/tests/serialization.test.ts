import { describe, expect, it } from "vitest";

import { encodeStroke } from "../src/geometry.js";
import { makeInteraction, serializeInteraction } from "../src/types.js";

// These canonical strings are asserted identically by the service's own test
// suite; byte equality here means the UI emits exactly what the validator
// parses with zero normalization changes.

describe("canonical interaction JSON", () => {
  it("bbox", () => {
    const s = serializeInteraction(makeInteraction("bbox", { box: [0, 20, 30, 50] }));
    expect(s).toBe('{"kind":"bbox","points":[],"box":[0,20,30,50],"stroke":null,"trimap":null}');
  });

  it("fg point", () => {
    const s = serializeInteraction(
      makeInteraction("fg_point", { points: [[5, 7, "fg"]] }),
    );
    expect(s).toBe(
      '{"kind":"fg_point","points":[[5,7,"fg"]],"box":null,"stroke":null,"trimap":null}',
    );
  });

  it("fg/bg points", () => {
    const s = serializeInteraction(
      makeInteraction("fg_bg_points", {
        points: [
          [10, 10, "fg"],
          [0, 0, "bg"],
          [0, 63, "bg"],
          [63, 0, "bg"],
          [63, 63, "bg"],
        ],
      }),
    );
    expect(s).toBe(
      '{"kind":"fg_bg_points","points":[[10,10,"fg"],[0,0,"bg"],[0,63,"bg"],[63,0,"bg"],[63,63,"bg"]],"box":null,"stroke":null,"trimap":null}',
    );
  });

  it("scribble runs", () => {
    const stroke = encodeStroke([
      { row: 2, col: 5 },
      { row: 2, col: 6 },
    ]);
    const s = serializeInteraction(makeInteraction("scribble", { stroke }));
    expect(s).toBe(
      '{"kind":"scribble","points":[],"box":null,"stroke":[[131077,2]],"trimap":null}',
    );
  });

  it("round-trips through JSON.parse unchanged", () => {
    const text =
      '{"kind":"bbox","points":[],"box":[1,2,3,4],"stroke":null,"trimap":null}';
    expect(serializeInteraction(JSON.parse(text))).toBe(text);
  });
});
