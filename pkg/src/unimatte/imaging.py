"""Pixel-field types and deterministic image algebra.

Conventions used across the package:
  - images are float arrays of shape (H, W, 3) with values in [0, 1]
  - alpha mattes are float arrays of shape (H, W) with values in [0, 1]
  - binary masks are uint8 arrays of shape (H, W) with values in {0, 1}
  - trimaps are float arrays of shape (H, W) with levels {0, 0.5, 1}
    (0 = definite background, 0.5 = unknown, 1 = definite foreground)

Files are 8-bit PNG; pixel values convert by value / 255.
"""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

TRIMAP_BG = 0.0
TRIMAP_UNKNOWN = 0.5
TRIMAP_FG = 1.0

# alpha level treated as fully opaque when carving trimap foreground;
# just below 255/255 so only saturated 8-bit pixels qualify
STRICT_FG_THRESHOLD = 0.999

DEFAULT_MASK_THRESHOLD = 0.0

TRIMAP_RADIUS_RANGE = (5, 25)


class ShapeError(ValueError):
    """Raised when array shapes violate an operation's contract."""


def _check_same_hw(*fields: np.ndarray) -> None:
    shapes = {f.shape[:2] for f in fields}
    if len(shapes) != 1:
        raise ShapeError(f"height/width mismatch: {sorted(shapes)}")


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"image must be (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError("image must have positive height and width")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def validate_alpha(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise ShapeError(f"alpha must be (H, W), got {alpha.shape}")
    if alpha.min() < 0.0 or alpha.max() > 1.0:
        raise ValueError("alpha values must lie in [0, 1]")
    return alpha


def validate_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeError(f"mask must be (H, W), got {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return mask.astype(np.uint8)


def validate_trimap(trimap: np.ndarray) -> np.ndarray:
    trimap = np.asarray(trimap, dtype=np.float64)
    if trimap.ndim != 2:
        raise ShapeError(f"trimap must be (H, W), got {trimap.shape}")
    if not np.isin(trimap, (TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG)).all():
        raise ValueError("trimap values must be one of {0, 0.5, 1}")
    return trimap


def composite(fg: np.ndarray, bg: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Alpha-blend a foreground over a background, per pixel and channel.

    out = alpha * fg + (1 - alpha) * bg
    """
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if fg.shape != bg.shape:
        raise ShapeError(f"fg/bg shape mismatch: {fg.shape} vs {bg.shape}")
    _check_same_hw(fg, bg, alpha)
    a = alpha if fg.ndim == 2 else alpha[..., None]
    return a * fg + (1.0 - a) * bg


def binarize_alpha(alpha: np.ndarray, threshold: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """Binary mask of pixels whose alpha strictly exceeds the threshold."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {threshold}")
    alpha = np.asarray(alpha, dtype=np.float64)
    return (alpha > threshold).astype(np.uint8)


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation: a pixel turns 1 if any input 1-pixel lies within
    the (2*radius+1)-square window around it."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = validate_mask(mask)
    if radius == 0:
        return mask.copy()
    out = ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=0)
    return out.astype(np.uint8)


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev erosion, dual of :func:`dilate`. Out-of-image pixels count
    as foreground, so a full-ones mask is a fixed point."""
    mask = validate_mask(mask)
    return (1 - dilate(1 - mask, radius)).astype(np.uint8)


def distance_to_boundary(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance from each 1-pixel to the nearest 0-pixel or to the
    image border (treated as background), 0 on background pixels."""
    mask = validate_mask(mask)
    if mask.sum() == 0:
        raise ValueError("mask has no foreground pixels")
    padded = np.pad(mask, 1, mode="constant", constant_values=0)
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


def make_trimap(
    alpha: np.ndarray,
    fg_erode: int | None = None,
    bg_dilate: int | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Derive a trimap from ground-truth alpha.

    Foreground is the strictly-opaque region eroded by ``fg_erode``;
    background is the complement of the support dilated by ``bg_dilate``;
    everything else is unknown. Radii left as None are drawn uniformly from
    TRIMAP_RADIUS_RANGE using ``seed``, so the same seed yields the same
    trimap.
    """
    alpha = validate_alpha(alpha)
    support = binarize_alpha(alpha, 0.0)
    if support.sum() == 0:
        raise ValueError("alpha is entirely zero: nothing to mat")
    rng = np.random.default_rng(seed)
    lo, hi = TRIMAP_RADIUS_RANGE
    if fg_erode is None:
        fg_erode = int(rng.integers(lo, hi + 1))
    if bg_dilate is None:
        bg_dilate = int(rng.integers(lo, hi + 1))
    fg = erode(binarize_alpha(alpha, STRICT_FG_THRESHOLD), fg_erode)
    bg = 1 - dilate(support, bg_dilate)
    trimap = np.full(alpha.shape, TRIMAP_UNKNOWN, dtype=np.float64)
    trimap[fg == 1] = TRIMAP_FG
    trimap[bg == 1] = TRIMAP_BG
    return trimap


def _sample_positions(n_out: int, n_in: int) -> np.ndarray:
    # corner-aligned: first/last output samples coincide with first/last input
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def resize_bilinear(field: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D field or (H, W, C) stack."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be >= 1 in both axes")
    field = np.asarray(field, dtype=np.float64)
    if field.ndim == 3:
        return np.stack(
            [resize_bilinear(field[..., c], out_h, out_w) for c in range(field.shape[2])],
            axis=-1,
        )
    if field.ndim != 2:
        raise ShapeError(f"expected 2-D or 3-D field, got {field.shape}")
    h, w = field.shape
    if (out_h, out_w) == (h, w):
        return field.copy()
    rows = _sample_positions(out_h, h)
    cols = _sample_positions(out_w, w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = field[np.ix_(r0, c0)] * (1 - fc) + field[np.ix_(r0, c1)] * fc
    bot = field[np.ix_(r1, c0)] * (1 - fc) + field[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


# ---------------------------------------------------------------------------
# PNG I/O (8-bit; values convert by /255)
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, img: np.ndarray) -> None:
    img = validate_image(img)
    arr = np.rint(img * 255.0).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(path)


def load_alpha(path) -> np.ndarray:
    arr = np.asarray(PILImage.open(path).convert("L"), dtype=np.float64)
    return arr / 255.0


def save_alpha(path, alpha: np.ndarray) -> None:
    alpha = validate_alpha(alpha)
    arr = np.rint(alpha * 255.0).astype(np.uint8)
    PILImage.fromarray(arr, mode="L").save(path)


def load_trimap(path) -> np.ndarray:
    """Read a trimap PNG encoded with levels 0/128/255."""
    arr = np.asarray(PILImage.open(path).convert("L"))
    levels = np.unique(arr)
    if not np.isin(levels, (0, 128, 255)).all():
        raise ValueError(f"trimap PNG must use levels 0/128/255, found {levels}")
    out = np.full(arr.shape, TRIMAP_UNKNOWN, dtype=np.float64)
    out[arr == 0] = TRIMAP_BG
    out[arr == 255] = TRIMAP_FG
    return out


def save_trimap(path, trimap: np.ndarray) -> None:
    trimap = validate_trimap(trimap)
    arr = np.full(trimap.shape, 128, dtype=np.uint8)
    arr[trimap == TRIMAP_BG] = 0
    arr[trimap == TRIMAP_FG] = 255
    PILImage.fromarray(arr, mode="L").save(path)
