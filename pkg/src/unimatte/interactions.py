"""User-interaction simulation and guidance rasterization.

Six interaction kinds are supported. Simulators derive each one from a
ground-truth alpha so that training and evaluation can generate guidance on
the fly; the encoder turns any interaction (simulated or human-drawn) into
extra input channels in [0, 1].

Interaction JSON (shared verbatim with the HTTP service and the UI):

    {"kind": "<kind>",
     "points": [[row, col, role], ...],       # role: "fg" | "bg" | "extreme"
     "box": [r0, c0, r1, c1] | null,          # inclusive corners
     "stroke": [[start, length], ...] | null, # row-major run-length pixels
     "trimap": "<path or data URI>" | null}
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import interpolate as scipy_interpolate

from .imaging import (
    binarize_alpha,
    dilate,
    distance_to_boundary,
    make_trimap,
    validate_alpha,
    validate_trimap,
)

POINT_SIGMA = 10.0
FG_POINT_MAX_JITTER = 5
EXTREME_MAX_JITTER = 10
BBOX_EXPAND = 10
SCRIBBLE_CANDIDATES = 5
SCRIBBLE_WIDTH = 5
SCRIBBLE_SAMPLES = 400

ROLE_FG = "fg"
ROLE_BG = "bg"
ROLE_EXTREME = "extreme"


class InteractionKind(str, Enum):
    FG_POINT = "fg_point"
    FG_BG_POINTS = "fg_bg_points"
    BBOX = "bbox"
    EXTREME_POINTS = "extreme_points"
    SCRIBBLE = "scribble"
    TRIMAP = "trimap"


_CHANNELS = {
    InteractionKind.FG_POINT: 1,
    InteractionKind.FG_BG_POINTS: 2,
    InteractionKind.BBOX: 1,
    InteractionKind.EXTREME_POINTS: 1,
    InteractionKind.SCRIBBLE: 1,
    InteractionKind.TRIMAP: 1,
}


def channels_for(kind: InteractionKind | str) -> int:
    """Guidance channel count for an interaction kind."""
    return _CHANNELS[InteractionKind(kind)]


@dataclass(frozen=True)
class Interaction:
    kind: InteractionKind
    points: tuple[tuple[int, int, str], ...] = ()
    box: tuple[int, int, int, int] | None = None
    stroke: tuple[tuple[int, int], ...] = ()  # sorted (row, col) pixels
    trimap: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = InteractionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == InteractionKind.FG_BG_POINTS:
            roles = [p[2] for p in self.points]
            if roles.count(ROLE_FG) != 1 or roles.count(ROLE_BG) != 4:
                raise ValueError("fg_bg_points needs exactly 1 fg and 4 bg points")
        if kind == InteractionKind.EXTREME_POINTS and len(self.points) != 4:
            raise ValueError("extreme_points needs exactly 4 points")
        if kind == InteractionKind.BBOX:
            if self.box is None:
                raise ValueError("bbox interaction needs a box")
            r0, c0, r1, c1 = self.box
            if r0 > r1 or c0 > c1:
                raise ValueError(f"box corners must be ordered, got {self.box}")
        if kind == InteractionKind.TRIMAP and self.trimap is None:
            raise ValueError("trimap interaction needs a trimap field")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def to_dict(self) -> dict:
        trimap_ref = None
        if self.trimap is not None:
            trimap_ref = _trimap_to_data_uri(self.trimap)
        return {
            "kind": self.kind.value,
            "points": [[int(r), int(c), role] for r, c, role in self.points],
            "box": list(map(int, self.box)) if self.box is not None else None,
            "stroke": _rle_encode(self.stroke) if self.stroke else None,
            "trimap": trimap_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Interaction":
        try:
            kind = InteractionKind(data["kind"])
        except (KeyError, ValueError) as exc:
            valid = ", ".join(k.value for k in InteractionKind)
            raise ValueError(f"kind must be one of: {valid}") from exc
        points = tuple((int(r), int(c), str(role)) for r, c, role in data.get("points") or ())
        box = data.get("box")
        box = tuple(map(int, box)) if box is not None else None
        stroke_rle = data.get("stroke")
        stroke = _rle_decode(stroke_rle) if stroke_rle else ()
        trimap = None
        ref = data.get("trimap")
        if ref is not None:
            trimap = _trimap_from_ref(ref)
        return cls(kind=kind, points=points, box=box, stroke=stroke, trimap=trimap)

    @classmethod
    def from_json(cls, text: str) -> "Interaction":
        return cls.from_dict(json.loads(text))


_RLE_STRIDE = 1 << 16  # fixed row stride so the encoding needs no image width


def _rle_encode(pixels: tuple[tuple[int, int], ...]) -> list[list[int]]:
    """Run-length encode (row, col) pixels as [[start, length], ...] runs
    over flat indices row * stride + col."""
    rows = np.array([p[0] for p in pixels], dtype=np.int64)
    cols = np.array([p[1] for p in pixels], dtype=np.int64)
    flat = np.sort(rows * _RLE_STRIDE + cols)
    runs: list[list[int]] = []
    start = prev = int(flat[0])
    for v in flat[1:]:
        v = int(v)
        if v == prev + 1:
            prev = v
            continue
        runs.append([start, prev - start + 1])
        start = prev = v
    runs.append([start, prev - start + 1])
    return runs


def _rle_decode(runs) -> tuple[tuple[int, int], ...]:
    pixels = []
    for start, length in runs:
        for flat in range(int(start), int(start) + int(length)):
            pixels.append((flat // _RLE_STRIDE, flat % _RLE_STRIDE))
    return tuple(pixels)


def _trimap_to_data_uri(trimap: np.ndarray) -> str:
    from PIL import Image as PILImage

    trimap = validate_trimap(trimap)
    arr = np.full(trimap.shape, 128, dtype=np.uint8)
    arr[trimap == 0.0] = 0
    arr[trimap == 1.0] = 255
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _trimap_from_ref(ref: str) -> np.ndarray:
    from .imaging import load_trimap

    if ref.startswith("data:image/png;base64,"):
        raw = base64.b64decode(ref.split(",", 1)[1])
        return load_trimap(io.BytesIO(raw))
    return load_trimap(ref)


# ---------------------------------------------------------------------------
# Simulators (deterministic functions of alpha and seed)
# ---------------------------------------------------------------------------

def _support_or_raise(alpha: np.ndarray) -> np.ndarray:
    alpha = validate_alpha(alpha)
    support = binarize_alpha(alpha, 0.0)
    if support.sum() == 0:
        raise ValueError("alpha has no foreground support")
    return support


def simulate_fg_point(alpha: np.ndarray, seed: int, max_jitter: int = FG_POINT_MAX_JITTER) -> Interaction:
    """Point at the deepest interior pixel of the support, jittered.

    The jittered point is clipped to image bounds and snapped back onto the
    support if the perturbation left it, so the result always has alpha > 0.
    """
    alpha = validate_alpha(alpha)
    support = _support_or_raise(alpha)
    dist = distance_to_boundary(support)
    r, c = np.unravel_index(int(np.argmax(dist)), dist.shape)
    rng = np.random.default_rng(seed)
    jr, jc = rng.integers(-max_jitter, max_jitter + 1, size=2)
    h, w = alpha.shape
    r = int(np.clip(r + jr, 0, h - 1))
    c = int(np.clip(c + jc, 0, w - 1))
    if support[r, c] == 0:
        rows, cols = np.nonzero(support)
        d2 = (rows - r) ** 2 + (cols - c) ** 2
        k = int(np.argmin(d2))
        r, c = int(rows[k]), int(cols[k])
    return Interaction(kind=InteractionKind.FG_POINT, points=((r, c, ROLE_FG),))


def simulate_bbox(alpha: np.ndarray, expand: int = BBOX_EXPAND) -> Interaction:
    """Tight support bounding box expanded on each side, clipped in-bounds."""
    alpha = validate_alpha(alpha)
    support = _support_or_raise(alpha)
    rows, cols = np.nonzero(support)
    h, w = alpha.shape
    box = (
        max(int(rows.min()) - expand, 0),
        max(int(cols.min()) - expand, 0),
        min(int(rows.max()) + expand, h - 1),
        min(int(cols.max()) + expand, w - 1),
    )
    return Interaction(kind=InteractionKind.BBOX, box=box)


def simulate_bg_points(alpha: np.ndarray, seed: int) -> Interaction:
    """One foreground point plus the four expanded-box corners as background."""
    fg = simulate_fg_point(alpha, seed).points[0]
    r0, c0, r1, c1 = simulate_bbox(alpha).box
    corners = ((r0, c0), (r0, c1), (r1, c0), (r1, c1))
    points = (fg,) + tuple((r, c, ROLE_BG) for r, c in corners)
    return Interaction(kind=InteractionKind.FG_BG_POINTS, points=points)


def _extreme_tangent_point(rows: np.ndarray, cols: np.ndarray, axis_min: bool, by_row: bool):
    # extreme along one axis; ties resolved by the median position along the
    # tangent axis
    primary = rows if by_row else cols
    tangent = cols if by_row else rows
    target = primary.min() if axis_min else primary.max()
    ties = np.sort(tangent[primary == target])
    t = int(ties[len(ties) // 2])
    return (int(target), t) if by_row else (t, int(target))


def simulate_extreme_points(
    alpha: np.ndarray, seed: int, max_jitter: int = EXTREME_MAX_JITTER
) -> Interaction:
    """Top, bottom, left-most and right-most support pixels, each jittered
    along the boundary-tangent axis and clipped in-bounds."""
    alpha = validate_alpha(alpha)
    support = _support_or_raise(alpha)
    rows, cols = np.nonzero(support)
    h, w = alpha.shape
    base = [
        _extreme_tangent_point(rows, cols, True, True),    # top
        _extreme_tangent_point(rows, cols, False, True),   # bottom
        _extreme_tangent_point(rows, cols, True, False),   # left-most
        _extreme_tangent_point(rows, cols, False, False),  # right-most
    ]
    rng = np.random.default_rng(seed)
    jit = rng.integers(-max_jitter, max_jitter + 1, size=4)
    points = []
    for i, (r, c) in enumerate(base):
        if i < 2:  # top/bottom jitter runs along columns
            c = int(np.clip(c + jit[i], 0, w - 1))
        else:
            r = int(np.clip(r + jit[i], 0, h - 1))
        points.append((r, c, ROLE_EXTREME))
    return Interaction(kind=InteractionKind.EXTREME_POINTS, points=tuple(points))


def _rasterize_spline(ctrl: np.ndarray, h: int, w: int) -> set[tuple[int, int]]:
    k = min(3, len(ctrl) - 1)
    try:
        tck, _ = scipy_interpolate.splprep([ctrl[:, 0], ctrl[:, 1]], s=0, k=k)
        u = np.linspace(0.0, 1.0, SCRIBBLE_SAMPLES)
        rs, cs = scipy_interpolate.splev(u, tck)
    except (ValueError, TypeError):
        # degenerate control polygon: fall back to the polyline itself
        rs = np.concatenate([np.linspace(ctrl[i, 0], ctrl[i + 1, 0], 50) for i in range(len(ctrl) - 1)])
        cs = np.concatenate([np.linspace(ctrl[i, 1], ctrl[i + 1, 1], 50) for i in range(len(ctrl) - 1)])
    rs = np.clip(np.rint(rs).astype(int), 0, h - 1)
    cs = np.clip(np.rint(cs).astype(int), 0, w - 1)
    return set(zip(rs.tolist(), cs.tolist()))


def scribble_candidates(alpha: np.ndarray, seed: int):
    """The five candidate strokes considered by :func:`simulate_scribble`.

    Each candidate is (pixels, coverage) where coverage is the summed alpha
    under the dilated stroke; exposed so the selection can be re-checked.
    """
    alpha = validate_alpha(alpha)
    support = _support_or_raise(alpha)
    rows, cols = np.nonzero(support)
    if rows.size < 3:
        raise ValueError("support too small to place 3 distinct control points")
    h, w = alpha.shape
    rng = np.random.default_rng(seed)
    radius = SCRIBBLE_WIDTH // 2
    candidates = []
    for _ in range(SCRIBBLE_CANDIDATES):
        n_ctrl = int(rng.integers(3, 5))
        n_ctrl = min(n_ctrl, rows.size)
        idx = rng.choice(rows.size, size=n_ctrl, replace=False)
        ctrl = np.stack([rows[idx], cols[idx]], axis=1).astype(np.float64)
        curve = _rasterize_spline(ctrl, h, w)
        mask = np.zeros((h, w), dtype=np.uint8)
        for r, c in curve:
            mask[r, c] = 1
        stroke = dilate(mask, radius)
        pixels = tuple(sorted(zip(*map(lambda a: a.tolist(), np.nonzero(stroke)))))
        coverage = float(alpha[stroke == 1].sum())
        candidates.append((pixels, coverage))
    return candidates


def simulate_scribble(alpha: np.ndarray, seed: int) -> Interaction:
    """Best of five random spline strokes, ranked by covered alpha mass."""
    candidates = scribble_candidates(alpha, seed)
    best = max(range(len(candidates)), key=lambda i: candidates[i][1])
    return Interaction(kind=InteractionKind.SCRIBBLE, stroke=candidates[best][0])


def simulate_trimap(alpha: np.ndarray, seed: int) -> Interaction:
    return Interaction(kind=InteractionKind.TRIMAP, trimap=make_trimap(alpha, seed=seed))


_SIMULATORS = {
    InteractionKind.FG_POINT: simulate_fg_point,
    InteractionKind.FG_BG_POINTS: simulate_bg_points,
    InteractionKind.BBOX: lambda alpha, seed: simulate_bbox(alpha),
    InteractionKind.EXTREME_POINTS: simulate_extreme_points,
    InteractionKind.SCRIBBLE: simulate_scribble,
    InteractionKind.TRIMAP: simulate_trimap,
}


def simulate(kind: InteractionKind | str, alpha: np.ndarray, seed: int) -> Interaction:
    """Simulate an interaction of the given kind from ground-truth alpha."""
    return _SIMULATORS[InteractionKind(kind)](alpha, seed)


# ---------------------------------------------------------------------------
# Guidance encoding
# ---------------------------------------------------------------------------

def _stamp_points(points, h: int, w: int) -> np.ndarray:
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float64)
    channel = np.zeros((h, w), dtype=np.float64)
    for r, c, _ in points:
        channel += np.exp(-((rr - r) ** 2 + (cc - c) ** 2) / (2.0 * POINT_SIGMA**2))
    return np.minimum(channel, 1.0)


def _check_in_bounds(interaction: Interaction, h: int, w: int) -> None:
    for r, c, _ in interaction.points:
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"point ({r}, {c}) outside {h}x{w} image")
    if interaction.box is not None:
        r0, c0, r1, c1 = interaction.box
        if not (0 <= r0 <= r1 < h and 0 <= c0 <= c1 < w):
            raise ValueError(f"box {interaction.box} outside {h}x{w} image")
    for r, c in interaction.stroke:
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"stroke pixel ({r}, {c}) outside {h}x{w} image")
    if interaction.trimap is not None and interaction.trimap.shape != (h, w):
        raise ValueError(f"trimap shape {interaction.trimap.shape} != ({h}, {w})")


def encode_guidance(interaction: Interaction, h: int, w: int) -> np.ndarray:
    """Rasterize an interaction to (H, W, C) guidance channels in [0, 1].

    Points become unit-peak Gaussian stamps (sigma = 10 px), summed then
    clipped when several share a channel. Foreground and background points
    use separate channels. A box fills its inside with 0 and the outside
    (certain background) with 1. Scribbles are binary strokes; trimaps pass
    through at their three levels.
    """
    _check_in_bounds(interaction, h, w)
    kind = interaction.kind
    if kind == InteractionKind.FG_POINT:
        return _stamp_points(interaction.points, h, w)[..., None]
    if kind == InteractionKind.FG_BG_POINTS:
        fg = [p for p in interaction.points if p[2] == ROLE_FG]
        bg = [p for p in interaction.points if p[2] == ROLE_BG]
        return np.stack([_stamp_points(fg, h, w), _stamp_points(bg, h, w)], axis=-1)
    if kind == InteractionKind.EXTREME_POINTS:
        return _stamp_points(interaction.points, h, w)[..., None]
    if kind == InteractionKind.BBOX:
        r0, c0, r1, c1 = interaction.box
        channel = np.ones((h, w), dtype=np.float64)
        channel[r0 : r1 + 1, c0 : c1 + 1] = 0.0
        return channel[..., None]
    if kind == InteractionKind.SCRIBBLE:
        channel = np.zeros((h, w), dtype=np.float64)
        for r, c in interaction.stroke:
            channel[r, c] = 1.0
        return channel[..., None]
    if kind == InteractionKind.TRIMAP:
        trimap = validate_trimap(interaction.trimap)
        return trimap[..., None].astype(np.float64)
    raise ValueError(f"unknown interaction kind: {kind}")
