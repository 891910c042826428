// Client-side rendering math on raw pixel buffers (RGBA image data and
// single-channel grayscale arrays), independent of the canvas API.

export type Rgb = [number, number, number];

/** out = alpha * fg + (1 - alpha) * bg, all in 8-bit, alpha normalized. */
export function compositeOverColor(
  rgba: Uint8ClampedArray,
  alpha: Uint8ClampedArray,
  background: Rgb,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba.length);
  for (let i = 0; i < alpha.length; i++) {
    const a = alpha[i] / 255;
    for (let c = 0; c < 3; c++) {
      out[4 * i + c] = Math.round(a * rgba[4 * i + c] + (1 - a) * background[c]);
    }
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Composite the matte against a second RGBA image instead of a flat color. */
export function compositeOverImage(
  rgba: Uint8ClampedArray,
  alpha: Uint8ClampedArray,
  backgroundRgba: Uint8ClampedArray,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba.length);
  for (let i = 0; i < alpha.length; i++) {
    const a = alpha[i] / 255;
    for (let c = 0; c < 3; c++) {
      out[4 * i + c] = Math.round(
        a * rgba[4 * i + c] + (1 - a) * backgroundRgba[4 * i + c],
      );
    }
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Matte shown over a light/dark checkerboard. */
export function checkerboardBacked(
  rgba: Uint8ClampedArray,
  alpha: Uint8ClampedArray,
  width: number,
  cell = 8,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba.length);
  for (let i = 0; i < alpha.length; i++) {
    const row = Math.floor(i / width);
    const col = i % width;
    const light = (Math.floor(row / cell) + Math.floor(col / cell)) % 2 === 0;
    const bg = light ? 200 : 120;
    const a = alpha[i] / 255;
    for (let c = 0; c < 3; c++) {
      out[4 * i + c] = Math.round(a * rgba[4 * i + c] + (1 - a) * bg);
    }
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Binary mask tinted over the image at fixed opacity. */
export function maskOverlay(
  rgba: Uint8ClampedArray,
  mask: Uint8ClampedArray,
  tint: Rgb = [255, 64, 64],
  opacity = 0.5,
  threshold = 128,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(rgba);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] >= threshold) {
      for (let c = 0; c < 3; c++) {
        out[4 * i + c] = Math.round(
          (1 - opacity) * rgba[4 * i + c] + opacity * tint[c],
        );
      }
    }
    out[4 * i + 3] = 255;
  }
  return out;
}

export function maskSupportCount(mask: Uint8ClampedArray, threshold = 128): number {
  let count = 0;
  for (let i = 0; i < mask.length; i++) if (mask[i] >= threshold) count++;
  return count;
}
