"""Binary-mask utilities: row profiles, component filtering, PNG dumps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class SilhouetteProfile:
    """Per-row foreground pixel counts of a segmented mask.

    ``counts[k]`` is the number of foreground pixels in row k; ``area`` their
    total and ``max_count`` the largest row. These are the only geometric
    quantities the volume formulas consume.
    """

    height: int
    counts: np.ndarray  # (height,) int64
    area: int
    max_count: int

    def __post_init__(self) -> None:
        if self.counts.shape != (self.height,):
            raise ValueError("counts length must equal height")
        if self.counts.min() < 0:
            raise ValueError("negative row count")
        if int(self.counts.sum()) != self.area or int(self.counts.max()) != self.max_count:
            raise ValueError("area/max inconsistent with counts")
        if self.max_count < 1:
            raise ValueError("profile of an empty mask")

    @property
    def occupied_height(self) -> int:
        """Rows in the tight vertical extent (first to last non-empty row)."""
        nonzero = np.flatnonzero(self.counts)
        return int(nonzero[-1] - nonzero[0] + 1)


def extract_profile(mask: np.ndarray) -> SilhouetteProfile:
    """Row profile of a boolean mask; rejects empty masks."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    if not mask.any():
        raise ValueError("cannot profile an empty mask")
    counts = mask.sum(axis=1).astype(np.int64)
    return SilhouetteProfile(
        height=mask.shape[0],
        counts=counts,
        area=int(counts.sum()),
        max_count=int(counts.max()),
    )


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected foreground component.

    Ties go to the component whose first pixel in row-major order comes
    first (topmost, then leftmost).
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask has no components")
    labels, n = ndimage.label(mask, structure=_FOUR_CONN)
    if n == 1:
        return mask.copy()
    sizes = np.bincount(labels.ravel())[1:]
    best = sizes.max()
    candidates = np.flatnonzero(sizes == best) + 1
    if candidates.size > 1:
        flat = labels.ravel()
        candidates = sorted(candidates, key=lambda lab: np.flatnonzero(flat == lab)[0])
    return labels == candidates[0]


def save_mask_png(mask: np.ndarray, path) -> None:
    """8-bit PNG dump, 255 = foreground."""
    img = Image.fromarray(np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) >= 128
