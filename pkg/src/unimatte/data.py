"""Corpus construction and training-time data plumbing.

Corpus layout under a root directory:

    {root}/fg/{fg_id}.png            source foreground images
    {root}/fg/{fg_id}.alpha.png      source foreground mattes
    {root}/bg/{bg_id}.png            backgrounds
    {root}/alpha/{sample_id}.png     per-record ground-truth (target) matte
    {root}/composite/{sample_id}.png composited inputs
    {root}/manifest.jsonl            one record per line

Multi-object records list the matting target first in ``fg_ids``; the
composite stacks the remaining foregrounds onto the background in listed
order and the target last, so the stored matte is exact for the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage import color as skcolor

from . import taxonomy
from .imaging import (
    composite,
    load_alpha,
    load_image,
    resize_bilinear,
    save_alpha,
    save_image,
    validate_alpha,
    validate_image,
)
from .taxonomy import CategoryTag

UNIFIED_RATIO = (310, 140, 280, 75)  # SO : ST : NSO : NST


@dataclass(frozen=True)
class Foreground:
    fg_id: str
    image: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True)
class Background:
    bg_id: str
    image: np.ndarray


@dataclass
class SampleRecord:
    sample_id: str
    fg_ids: list[str]
    bg_id: str
    alpha_path: str
    composite_path: str
    category: CategoryTag
    object_count: int

    def to_json_line(self) -> str:
        data = {
            "sample_id": self.sample_id,
            "fg_ids": self.fg_ids,
            "bg_id": self.bg_id,
            "alpha_path": self.alpha_path,
            "composite_path": self.composite_path,
            "category": self.category.value,
            "object_count": self.object_count,
        }
        return json.dumps(data, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "SampleRecord":
        data = json.loads(line)
        return cls(
            sample_id=data["sample_id"],
            fg_ids=list(data["fg_ids"]),
            bg_id=data["bg_id"],
            alpha_path=data["alpha_path"],
            composite_path=data["composite_path"],
            category=CategoryTag(data["category"]),
            object_count=int(data["object_count"]),
        )

    @property
    def target_fg_id(self) -> str:
        return self.fg_ids[0]


@dataclass
class Manifest:
    records: list[SampleRecord]
    split: str = "train"

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("sample_ids must be unique")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split}")

    def category_counts(self) -> dict[str, int]:
        counts = {tag.value: 0 for tag in CategoryTag}
        for rec in self.records:
            counts[rec.category.value] += 1
        return counts

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for rec in self.records:
                f.write(rec.to_json_line() + "\n")

    @classmethod
    def load(cls, path, split: str = "train") -> "Manifest":
        records = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(SampleRecord.from_json_line(line))
        return cls(records=records, split=split)

    def __len__(self) -> int:
        return len(self.records)


def load_foreground_dir(path) -> list[Foreground]:
    """Read a pool directory holding image/NNN.png + alpha/NNN.png pairs."""
    path = Path(path)
    fgs = []
    for img_path in sorted((path / "image").glob("*.png")):
        alpha_path = path / "alpha" / img_path.name
        if not alpha_path.exists():
            raise FileNotFoundError(f"missing matte for {img_path}")
        fgs.append(
            Foreground(
                fg_id=f"{path.name}_{img_path.stem}",
                image=load_image(img_path),
                alpha=load_alpha(alpha_path),
            )
        )
    if not fgs:
        raise FileNotFoundError(f"no foreground PNGs under {path}")
    return fgs


def load_background_dir(path) -> list[Background]:
    path = Path(path)
    bgs = [
        Background(bg_id=f"{path.name}_{p.stem}", image=load_image(p))
        for p in sorted(path.glob("*.png"))
    ]
    if not bgs:
        raise FileNotFoundError(f"no background PNGs under {path}")
    return bgs


def _match_size(image: np.ndarray, h: int, w: int) -> np.ndarray:
    if image.shape[:2] == (h, w):
        return image
    return np.clip(resize_bilinear(image, h, w), 0.0, 1.0)


def _match_size_alpha(alpha: np.ndarray, h: int, w: int) -> np.ndarray:
    if alpha.shape == (h, w):
        return alpha
    return np.clip(resize_bilinear(alpha, h, w), 0.0, 1.0)


def _write_sources(root: Path, fgs: list[Foreground], bgs: list[Background]) -> None:
    (root / "fg").mkdir(parents=True, exist_ok=True)
    (root / "bg").mkdir(parents=True, exist_ok=True)
    for fg in fgs:
        save_image(root / "fg" / f"{fg.fg_id}.png", fg.image)
        save_alpha(root / "fg" / f"{fg.fg_id}.alpha.png", fg.alpha)
    for bg in bgs:
        save_image(root / "bg" / f"{bg.bg_id}.png", bg.image)


def _compose_record(
    root: Path,
    sample_id: str,
    target: Foreground,
    distractors: list[Foreground],
    bg: Background,
) -> SampleRecord:
    h, w = target.alpha.shape
    base = _match_size(bg.image, h, w)
    for d in distractors:
        base = composite(_match_size(d.image, h, w), base, d.alpha)
    image = composite(target.image, base, target.alpha)
    (root / "alpha").mkdir(parents=True, exist_ok=True)
    (root / "composite").mkdir(parents=True, exist_ok=True)
    alpha_rel = f"alpha/{sample_id}.png"
    comp_rel = f"composite/{sample_id}.png"
    save_alpha(root / alpha_rel, target.alpha)
    save_image(root / comp_rel, np.clip(image, 0.0, 1.0))
    object_count = 1 + len(distractors)
    category = taxonomy.classify(object_count, target.alpha)
    return SampleRecord(
        sample_id=sample_id,
        fg_ids=[target.fg_id] + [d.fg_id for d in distractors],
        bg_id=bg.bg_id,
        alpha_path=alpha_rel,
        composite_path=comp_rel,
        category=category,
        object_count=object_count,
    )


def build_composites(
    fgs: list[Foreground],
    bgs: list[Background],
    per_fg: int,
    seed: int,
    out_root,
    split: str = "train",
) -> Manifest:
    """Compose each foreground with ``per_fg`` distinct backgrounds."""
    if per_fg < 1:
        raise ValueError("per_fg must be >= 1")
    if len(bgs) < per_fg:
        raise ValueError(f"need at least {per_fg} backgrounds, have {len(bgs)}")
    root = Path(out_root)
    _write_sources(root, fgs, bgs)
    rng = np.random.default_rng(seed)
    records = []
    for fg in fgs:
        picks = rng.choice(len(bgs), size=per_fg, replace=False)
        for j, b in enumerate(picks):
            sample_id = f"{fg.fg_id}__{bgs[b].bg_id}__{j:03d}"
            records.append(_compose_record(root, sample_id, fg, [], bgs[b]))
    manifest = Manifest(records=records, split=split)
    manifest.save(root / "manifest.jsonl")
    return manifest


def _check_unified_ratio(target_counts: tuple[int, int, int, int]) -> None:
    if len(target_counts) != 4 or any(c <= 0 for c in target_counts):
        raise ValueError("target_counts must be four positive integers")
    base = UNIFIED_RATIO
    for i in range(4):
        if target_counts[i] * base[0] != target_counts[0] * base[i]:
            raise ValueError(
                f"target counts {target_counts} are not proportional to {base}"
            )


def build_unified_testset(
    so_fgs: list[Foreground],
    st_fgs: list[Foreground],
    so_bgs: list[Background],
    st_bgs: list[Background],
    target_counts: tuple[int, int, int, int],
    seed: int,
    out_root,
) -> Manifest:
    """Build the category-balanced test corpus.

    ``target_counts`` gives (SO, ST, NSO, NST) record counts and must stay
    proportional to the 310:140:280:75 reference ratio. Non-salient records
    place two or more foregrounds on one background, with the first-listed
    foreground as the matting target.
    """
    _check_unified_ratio(tuple(target_counts))
    root = Path(out_root)
    _write_sources(root, so_fgs + st_fgs, so_bgs + st_bgs)
    rng = np.random.default_rng(seed)
    records = []

    def pick(pool, exclude=None):
        idx = int(rng.integers(0, len(pool)))
        if exclude is not None and len(pool) > 1:
            while pool[idx] is exclude:
                idx = int(rng.integers(0, len(pool)))
        return pool[idx]

    n_so, n_st, n_nso, n_nst = target_counts
    for i in range(n_so):
        records.append(_compose_record(root, f"so_{i:04d}", pick(so_fgs), [], pick(so_bgs)))
    for i in range(n_st):
        records.append(_compose_record(root, f"st_{i:04d}", pick(st_fgs), [], pick(st_bgs)))
    for i in range(n_nso):
        target = pick(so_fgs)
        extras = [pick(so_fgs, exclude=target) for _ in range(int(rng.integers(1, 3)))]
        records.append(_compose_record(root, f"nso_{i:04d}", target, extras, pick(so_bgs)))
    for i in range(n_nst):
        target = pick(st_fgs)
        extras = [pick(so_fgs + st_fgs) for _ in range(int(rng.integers(1, 3)))]
        records.append(_compose_record(root, f"nst_{i:04d}", target, extras, pick(st_bgs)))

    for rec in records:
        verified = taxonomy.classify_sample(rec, root)
        if verified != rec.category:
            raise ValueError(
                f"{rec.sample_id}: built category {rec.category} but alpha classifies as {verified}"
            )
    manifest = Manifest(records=records, split="test")
    manifest.save(root / "manifest.jsonl")
    return manifest


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclass
class AugmentConfig:
    crop: int = 64
    p_combine: float = 0.5
    max_rotate_deg: float = 30.0
    scale_range: tuple[float, float] = (0.8, 1.25)
    max_shear_deg: float = 10.0
    jitter: float = 0.1


def merged_alpha(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Opacity of foreground 1 stacked over foreground 2."""
    return a1 + a2 * (1.0 - a1)


def apply_affine(
    image: np.ndarray,
    alpha: np.ndarray,
    rotate_deg: float,
    scale: float,
    shear_deg: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate/scale/shear about the image center; both fields congruently."""
    image = validate_image(image)
    alpha = validate_alpha(alpha)
    h, w = alpha.shape
    theta = np.deg2rad(rotate_deg)
    sh = np.tan(np.deg2rad(shear_deg))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shear = np.array([[1.0, sh], [0.0, 1.0]])
    fwd = rot @ shear * scale
    inv = np.linalg.inv(fwd)
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ center
    out_alpha = ndimage.affine_transform(alpha, inv, offset=offset, order=1, cval=0.0)
    out_image = np.stack(
        [
            ndimage.affine_transform(image[..., c], inv, offset=offset, order=1, cval=0.0)
            for c in range(3)
        ],
        axis=-1,
    )
    return np.clip(out_image, 0.0, 1.0), np.clip(out_alpha, 0.0, 1.0)


def random_crop(
    image: np.ndarray, alpha: np.ndarray, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Crop a size x size window; upsample first if the field is smaller."""
    h, w = alpha.shape
    if h < size or w < size:
        scale_h, scale_w = max(size, h), max(size, w)
        image = np.clip(resize_bilinear(image, scale_h, scale_w), 0.0, 1.0)
        alpha = np.clip(resize_bilinear(alpha, scale_h, scale_w), 0.0, 1.0)
        h, w = alpha.shape
    r0 = int(rng.integers(0, h - size + 1))
    c0 = int(rng.integers(0, w - size + 1))
    return image[r0 : r0 + size, c0 : c0 + size], alpha[r0 : r0 + size, c0 : c0 + size]


def color_jitter(image: np.ndarray, rng: np.random.Generator, magnitude: float = 0.1) -> np.ndarray:
    """Shift hue and scale saturation/brightness, each within +-magnitude."""
    hsv = skcolor.rgb2hsv(image)
    hsv[..., 0] = np.mod(hsv[..., 0] + rng.uniform(-magnitude, magnitude), 1.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 + rng.uniform(-magnitude, magnitude)), 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * (1.0 + rng.uniform(-magnitude, magnitude)), 0.0, 1.0)
    return np.clip(skcolor.hsv2rgb(hsv), 0.0, 1.0)


class CorpusSampler:
    """Loads records from a corpus root and produces augmented training pairs."""

    def __init__(self, root, manifest: Manifest, config: AugmentConfig | None = None):
        self.root = Path(root)
        self.manifest = manifest
        self.config = config or AugmentConfig()

    def _load_sources(self, record: SampleRecord):
        target_alpha = load_alpha(self.root / record.alpha_path)
        target_image = load_image(self.root / "fg" / f"{record.target_fg_id}.png")
        bg = load_image(self.root / "bg" / f"{record.bg_id}.png")
        h, w = target_alpha.shape
        base = _match_size(bg, h, w)
        for fg_id in record.fg_ids[1:]:
            d_img = load_image(self.root / "fg" / f"{fg_id}.png")
            d_alpha = load_alpha(self.root / "fg" / f"{fg_id}.alpha.png")
            base = composite(_match_size(d_img, h, w), base, d_alpha)
        return target_image, target_alpha, base

    def sample(self, record: SampleRecord, seed: int, augment: bool = True):
        """One (image, alpha) training pair; deterministic for a given seed."""
        rng = np.random.default_rng(seed)
        cfg = self.config
        if not augment:
            image = load_image(self.root / record.composite_path)
            alpha = load_alpha(self.root / record.alpha_path)
            return random_crop(image, alpha, cfg.crop, rng)
        fg_img, target_alpha, base = self._load_sources(record)
        alpha = target_alpha
        if rng.uniform() < cfg.p_combine and len(self.manifest) > 1:
            other = self.manifest.records[int(rng.integers(0, len(self.manifest)))]
            if other.sample_id != record.sample_id:
                o_img = load_image(self.root / "fg" / f"{other.target_fg_id}.png")
                h, w = alpha.shape
                o_alpha = _match_size_alpha(
                    load_alpha(self.root / other.alpha_path), h, w
                )
                base = composite(_match_size(o_img, h, w), base, o_alpha)
                alpha = merged_alpha(target_alpha, o_alpha)
        image = composite(fg_img, base, target_alpha)
        angle = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg)
        scale = rng.uniform(*cfg.scale_range)
        shear = rng.uniform(-cfg.max_shear_deg, cfg.max_shear_deg)
        image, alpha = apply_affine(image, alpha, angle, scale, shear)
        image, alpha = random_crop(image, alpha, cfg.crop, rng)
        image = color_jitter(image, rng, cfg.jitter)
        return image, alpha


# ---------------------------------------------------------------------------
# Foreground-consistency batch planning
# ---------------------------------------------------------------------------

def fc_group_batches(
    manifest: Manifest, group_size: int, batch_groups: int, seed: int
) -> list[list[list[str]]]:
    """Plan one epoch of batches for consistency pretraining.

    Returns batches, each a list of ``batch_groups`` groups, each a list of
    ``group_size`` sample ids sharing a target foreground. Every record is
    scheduled at most once; leftovers that cannot fill a group or batch are
    dropped for the epoch.
    """
    if group_size < 2:
        raise ValueError("group_size must be >= 2 to compare features")
    by_fg: dict[str, list[str]] = {}
    for rec in manifest.records:
        by_fg.setdefault(rec.target_fg_id, []).append(rec.sample_id)
    short = {fg: len(ids) for fg, ids in by_fg.items() if len(ids) < group_size}
    if short:
        raise ValueError(
            f"every foreground needs >= {group_size} composites; short: {short}"
        )
    rng = np.random.default_rng(seed)
    groups: list[list[str]] = []
    for fg in sorted(by_fg):
        ids = list(by_fg[fg])
        rng.shuffle(ids)
        for i in range(0, len(ids) - group_size + 1, group_size):
            groups.append(ids[i : i + group_size])
    order = rng.permutation(len(groups))
    groups = [groups[i] for i in order]
    batches = [
        groups[i : i + batch_groups]
        for i in range(0, len(groups) - batch_groups + 1, batch_groups)
    ]
    if not batches:
        raise ValueError("manifest lacks enough shared-foreground groups for one batch")
    return batches
