"""Sample taxonomy along two axes: saliency and transparency.

Categories:
  SO  - salient opaque        (single target, mostly hard alpha)
  ST  - salient transparent   (single target, broadly mixed alpha)
  NSO - non-salient opaque    (multiple objects, opaque target)
  NST - non-salient transparent

Saliency is compositional knowledge (how many candidate objects the sample
contains) and comes from manifest metadata; opacity is measured from the
target alpha's value distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .imaging import validate_alpha, validate_mask

HISTOGRAM_BINS = 256

# fraction of mixed-alpha pixels (within the support) above which a sample
# counts as transparent
OPACITY_THRESHOLD = 0.3

MIXED_EPS = 1.0 / 255.0


class CategoryTag(str, Enum):
    SO = "SO"
    ST = "ST"
    NSO = "NSO"
    NST = "NST"


@dataclass(frozen=True)
class AlphaHistogram:
    """Counts of alpha values over 256 uniform bins spanning [0, 1]."""

    bins: np.ndarray
    total: int


def alpha_histogram(alpha: np.ndarray, region: np.ndarray) -> AlphaHistogram:
    """Histogram of alpha values restricted to a nonempty region mask."""
    alpha = validate_alpha(alpha)
    region = validate_mask(region)
    if alpha.shape != region.shape:
        raise ValueError("alpha and region must share shape")
    values = alpha[region == 1]
    if values.size == 0:
        raise ValueError("region is empty")
    counts, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return AlphaHistogram(bins=counts, total=int(values.size))


def transparency_fraction(alpha: np.ndarray) -> float:
    """Fraction of support pixels with strictly mixed alpha.

    Mixed means alpha in (eps, 1 - eps) with eps = 1/255, counted among
    pixels with alpha > 0. Returns 0 for an all-zero alpha.
    """
    alpha = validate_alpha(alpha)
    support = alpha > 0.0
    n = int(support.sum())
    if n == 0:
        return 0.0
    mixed = (alpha > MIXED_EPS) & (alpha < 1.0 - MIXED_EPS)
    return float(mixed.sum()) / n


def classify(object_count: int, alpha: np.ndarray) -> CategoryTag:
    """Compose a category tag from object count and the target alpha."""
    if object_count < 1:
        raise ValueError(f"object_count must be >= 1, got {object_count}")
    salient = object_count == 1
    opaque = transparency_fraction(alpha) < OPACITY_THRESHOLD
    if salient:
        return CategoryTag.SO if opaque else CategoryTag.ST
    return CategoryTag.NSO if opaque else CategoryTag.NST


def classify_sample(record, root) -> CategoryTag:
    """Classify a manifest record by loading its ground-truth alpha."""
    from pathlib import Path

    from .imaging import load_alpha

    if record.object_count is None or record.alpha_path is None:
        raise ValueError("record lacks object_count or alpha_path metadata")
    alpha = load_alpha(Path(root) / record.alpha_path)
    return classify(record.object_count, alpha)
