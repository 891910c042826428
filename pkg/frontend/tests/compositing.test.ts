import { describe, expect, it } from "vitest";

import {
  checkerboardBacked,
  compositeOverColor,
  compositeOverImage,
  maskOverlay,
  maskSupportCount,
} from "../src/compositing.js";

function randomRgba(n: number, seed = 1): Uint8ClampedArray {
  // deterministic xorshift so expected values are reproducible
  let state = seed;
  const next = () => {
    state ^= state << 13;
    state ^= state >>> 17;
    state ^= state << 5;
    return (state >>> 0) % 256;
  };
  const out = new Uint8ClampedArray(4 * n);
  for (let i = 0; i < n; i++) {
    out[4 * i] = next();
    out[4 * i + 1] = next();
    out[4 * i + 2] = next();
    out[4 * i + 3] = 255;
  }
  return out;
}

describe("composite over color", () => {
  it("returns the original image for full alpha", () => {
    const rgba = randomRgba(16);
    const alpha = new Uint8ClampedArray(16).fill(255);
    const out = compositeOverColor(rgba, alpha, [0, 128, 255]);
    for (let i = 0; i < 16; i++) {
      for (let c = 0; c < 3; c++) expect(out[4 * i + c]).toBe(rgba[4 * i + c]);
    }
  });

  it("returns the background for zero alpha", () => {
    const rgba = randomRgba(16, 7);
    const alpha = new Uint8ClampedArray(16).fill(0);
    const out = compositeOverColor(rgba, alpha, [10, 20, 30]);
    for (let i = 0; i < 16; i++) {
      expect(out[4 * i]).toBe(10);
      expect(out[4 * i + 1]).toBe(20);
      expect(out[4 * i + 2]).toBe(30);
    }
  });

  it("matches the reference blend within one 8-bit step", () => {
    const n = 64;
    const rgba = randomRgba(n, 3);
    const alpha = new Uint8ClampedArray(n);
    for (let i = 0; i < n; i++) alpha[i] = (i * 37) % 256;
    const bg: [number, number, number] = [40, 90, 200];
    const out = compositeOverColor(rgba, alpha, bg);
    for (let i = 0; i < n; i++) {
      const a = alpha[i] / 255;
      for (let c = 0; c < 3; c++) {
        const reference = a * rgba[4 * i + c] + (1 - a) * bg[c];
        expect(Math.abs(out[4 * i + c] - reference)).toBeLessThanOrEqual(1.0);
      }
    }
  });

  it("composites over a second image the same way", () => {
    const n = 16;
    const fg = randomRgba(n, 5);
    const bg = randomRgba(n, 9);
    const alpha = new Uint8ClampedArray(n).fill(128);
    const out = compositeOverImage(fg, alpha, bg);
    for (let i = 0; i < n; i++) {
      const reference = (128 / 255) * fg[4 * i] + (1 - 128 / 255) * bg[4 * i];
      expect(Math.abs(out[4 * i] - reference)).toBeLessThanOrEqual(1.0);
    }
  });
});

describe("mask overlay", () => {
  it("tints exactly the decoded support", () => {
    const n = 64;
    const rgba = randomRgba(n, 11);
    const mask = new Uint8ClampedArray(n);
    for (let i = 0; i < n; i++) mask[i] = i % 3 === 0 ? 255 : 0;
    const out = maskOverlay(rgba, mask, [255, 0, 0], 0.5);
    let tinted = 0;
    for (let i = 0; i < n; i++) {
      const changed =
        out[4 * i] !== rgba[4 * i] ||
        out[4 * i + 1] !== rgba[4 * i + 1] ||
        out[4 * i + 2] !== rgba[4 * i + 2];
      if (changed) tinted++;
      // untouched pixels must be bit-identical
      if (mask[i] < 128) {
        expect(out[4 * i]).toBe(rgba[4 * i]);
      }
    }
    expect(tinted).toBeLessThanOrEqual(maskSupportCount(mask));
    expect(maskSupportCount(mask)).toBe(Math.ceil(n / 3));
  });
});

describe("checkerboard", () => {
  it("shows the image where alpha is full and the board where empty", () => {
    const n = 64; // 8x8
    const rgba = randomRgba(n, 13);
    const alpha = new Uint8ClampedArray(n).fill(0);
    alpha[0] = 255;
    const out = checkerboardBacked(rgba, alpha, 8, 4);
    expect(out[0]).toBe(rgba[0]);
    // an empty pixel inside the first light cell shows the board value
    expect(out[4 * 1]).toBe(200);
  });
});
