"""Desk-scale synthetic assets: blobby foreground objects with alpha mattes
and textured backgrounds, sized for fast CPU experiments."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import save_alpha, save_image


def make_blob_mask(
    rng: np.random.Generator,
    h: int,
    w: int,
    margin: int = 12,
    n_lobes: int = 3,
    radius_range: tuple[int, int] = (6, 14),
) -> np.ndarray:
    """Union of a few overlapping disks, kept at least ``margin`` pixels away
    from the image border."""
    lo, hi = radius_range
    margin = max(1, min(margin, (min(h, w) - 2 * lo - 4) // 2))
    hi = min(hi, (min(h, w) - 2 * margin) // 2)
    hi = max(hi, lo)
    mask = np.zeros((h, w), dtype=np.uint8)
    rr, cc = np.mgrid[0:h, 0:w]
    center_r = rng.integers(margin + hi, h - margin - hi + 1)
    center_c = rng.integers(margin + hi, w - margin - hi + 1)
    for i in range(n_lobes):
        radius = int(rng.integers(lo, hi + 1))
        if i == 0:
            r, c = center_r, center_c
        else:
            r = center_r + rng.integers(-hi // 2, hi // 2 + 1)
            c = center_c + rng.integers(-hi // 2, hi // 2 + 1)
        r = int(np.clip(r, margin + radius, h - margin - radius - 1))
        c = int(np.clip(c, margin + radius, w - margin - radius - 1))
        mask |= ((rr - r) ** 2 + (cc - c) ** 2 <= radius**2).astype(np.uint8)
    return mask


def make_opaque_alpha(rng: np.random.Generator, h: int, w: int, margin: int = 12) -> np.ndarray:
    """Hard matte: blob support fully opaque, elsewhere zero."""
    return make_blob_mask(rng, h, w, margin=margin).astype(np.float64)


def make_transparent_alpha(rng: np.random.Generator, h: int, w: int, margin: int = 12) -> np.ndarray:
    """Broadly mixed matte: a blob whose interior opacity varies smoothly."""
    mask = make_blob_mask(rng, h, w, margin=margin)
    field = rng.uniform(0.25, 0.75, size=(h, w))
    field = ndimage.gaussian_filter(field, sigma=4)
    alpha = mask * np.clip(field, 0.15, 0.85)
    # a thin opaque rim keeps the object readable against the background
    rim = mask - ndimage.binary_erosion(mask, iterations=1).astype(np.uint8)
    alpha[rim == 1] = 1.0
    return np.clip(alpha, 0.0, 1.0)


def make_texture(rng: np.random.Generator, h: int, w: int, smooth: float = 8.0) -> np.ndarray:
    """Smooth random RGB texture in [0, 1]."""
    img = rng.uniform(0.0, 1.0, size=(h, w, 3))
    for c in range(3):
        img[..., c] = ndimage.gaussian_filter(img[..., c], sigma=smooth)
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo) * 0.8 + 0.1
    return img


def make_foreground(
    rng: np.random.Generator, h: int, w: int, transparent: bool, margin: int = 12
) -> tuple[np.ndarray, np.ndarray]:
    """A colored foreground image and its matte."""
    if transparent:
        alpha = make_transparent_alpha(rng, h, w, margin=margin)
    else:
        alpha = make_opaque_alpha(rng, h, w, margin=margin)
    color = rng.uniform(0.2, 1.0, size=3)
    texture = make_texture(rng, h, w, smooth=3.0)
    image = np.clip(texture * 0.4 + color * 0.6, 0.0, 1.0)
    return image, alpha


def write_asset_dirs(
    out: Path,
    n_so_fg: int = 8,
    n_st_fg: int = 6,
    n_bg: int = 12,
    size: int = 128,
    seed: int = 0,
) -> dict[str, int]:
    """Write foreground/background PNG pools under ``out``.

    Layout: fg_so/{image,alpha}/NNN.png, fg_st/{image,alpha}/NNN.png,
    bg_so/NNN.png, bg_st/NNN.png.
    """
    out = Path(out)
    rng = np.random.default_rng(seed)
    for group, n, transparent in (("fg_so", n_so_fg, False), ("fg_st", n_st_fg, True)):
        (out / group / "image").mkdir(parents=True, exist_ok=True)
        (out / group / "alpha").mkdir(parents=True, exist_ok=True)
        for i in range(n):
            image, alpha = make_foreground(rng, size, size, transparent)
            save_image(out / group / "image" / f"{i:03d}.png", image)
            save_alpha(out / group / "alpha" / f"{i:03d}.png", alpha)
    for group in ("bg_so", "bg_st"):
        (out / group).mkdir(parents=True, exist_ok=True)
        for i in range(n_bg):
            save_image(out / group / f"{i:03d}.png", make_texture(rng, size, size))
    return {"fg_so": n_so_fg, "fg_st": n_st_fg, "bg_so": n_bg, "bg_st": n_bg}
