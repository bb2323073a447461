"""Box-initialized iterative foreground extraction.

Alternates color-model refitting with an exact min-cut over the pixel grid:
pixels inside the box start as probable foreground, everything outside as
definite background, and no user interaction is ever consulted. The cut runs
on a crop around the box (padded by 10%), optionally downscaled to bound
runtime on large photos.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..dataset import BoundingBox
from ..errors import DegenerateSegmentationError
from . import gmm
from .maxflow import GridSolver, grid_edges_8

# Trimap states
BG_HARD = 0
BG_PROB = 1
FG_PROB = 2
FG_HARD = 3

_PAD_FRACTION = 0.10
_EARLY_STOP_REL = 1e-3


@dataclass(frozen=True)
class SegConfig:
    """Knobs exposed as seg.* CLI keys."""

    max_side: int = 600
    gamma: float = 50.0
    components: int = 5
    iterations: int = 5
    seed: int = 42


@dataclass
class GrabCutResult:
    mask: np.ndarray  # bool, dimensions of the box region
    energies: list[float] = field(default_factory=list)
    iterations: int = 0


def _neighbor_weights(image: np.ndarray, gamma: float):
    """8-neighborhood smoothness capacities with image-adaptive contrast."""
    h, w = image.shape[:2]
    pairs, dist = grid_edges_8(h, w)
    flat = image.reshape(-1, 3).astype(np.float64)
    diff2 = ((flat[pairs[:, 0]] - flat[pairs[:, 1]]) ** 2).sum(axis=1)
    mean_diff2 = float(diff2.mean()) if diff2.size else 0.0
    contrast = 1.0 / (2.0 * mean_diff2) if mean_diff2 > 0 else 0.0
    caps = gamma * dist * np.exp(-contrast * diff2)
    return pairs, caps


def _downscale(crop: np.ndarray, box: BoundingBox, max_side: int):
    h, w = crop.shape[:2]
    longest = max(h, w)
    if longest <= max_side:
        return crop, box, 1.0
    scale = max_side / longest
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    small = np.asarray(
        Image.fromarray(crop).resize((new_w, new_h), Image.BILINEAR), dtype=np.uint8
    )
    sx, sy = new_w / w, new_h / h
    sb = BoundingBox(
        x_min=min(int(np.floor(box.x_min * sx)), new_w - 4),
        y_min=min(int(np.floor(box.y_min * sy)), new_h - 4),
        x_max=max(int(np.ceil(box.x_max * sx)), int(np.floor(box.x_min * sx)) + 4),
        y_max=max(int(np.ceil(box.y_max * sy)), int(np.floor(box.y_min * sy)) + 4),
    )
    sb = BoundingBox(
        x_min=sb.x_min, y_min=sb.y_min, x_max=min(sb.x_max, new_w), y_max=min(sb.y_max, new_h)
    )
    return small, sb, scale


def build_trimap(shape: tuple[int, int], box: BoundingBox) -> np.ndarray:
    """Probable foreground strictly inside the box, hard background elsewhere.

    The box's own 1-px border ring stays hard background so no foreground
    pixel can sit on the box border.
    """
    trimap = np.full(shape, BG_HARD, dtype=np.uint8)
    trimap[box.y_min + 1: box.y_max - 1, box.x_min + 1: box.x_max - 1] = FG_PROB
    return trimap


def grabcut(image: np.ndarray, box: BoundingBox, config: SegConfig | None = None) -> GrabCutResult:
    """Segment the object inside ``box``; returns the mask over the box region.

    Raises :class:`DegenerateSegmentationError` when no foreground survives
    (e.g. the box interior is indistinguishable from its surroundings), and
    ``ValueError`` for boxes that leave no background to learn from.
    """
    config = config or SegConfig()
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or min(image.shape[:2]) < 1:
        raise ValueError("image must be an RGB raster")
    h, w = image.shape[:2]
    if not box.within(w, h):
        raise ValueError(f"box {box} outside {w}x{h} image")
    if box.area < 16:
        raise ValueError(f"box area {box.area} below minimum of 16 px")
    if box.width * box.height == h * w:
        raise ValueError("box covers the entire image; no definite background available")

    pad_x = max(2, round(_PAD_FRACTION * box.width))
    pad_y = max(2, round(_PAD_FRACTION * box.height))
    cx0 = max(0, box.x_min - pad_x)
    cy0 = max(0, box.y_min - pad_y)
    cx1 = min(w, box.x_max + pad_x)
    cy1 = min(h, box.y_max + pad_y)
    crop = image[cy0:cy1, cx0:cx1]
    crop_box = BoundingBox(box.x_min - cx0, box.y_min - cy0, box.x_max - cx0, box.y_max - cy0)

    work, work_box, scale = _downscale(crop, crop_box, config.max_side)
    trimap = build_trimap(work.shape[:2], work_box)
    flat = work.reshape(-1, 3).astype(np.float64)
    pairs, ncaps = _neighbor_weights(work, config.gamma)
    solver = GridSolver(work.shape[0], work.shape[1], pairs, ncaps)
    hard_cap = 9.0 * config.gamma

    fg_model = gmm.fit_gmm(flat[(trimap >= FG_PROB).ravel()], config.components,
                           config.seed, max_iters=2)
    bg_model = gmm.fit_gmm(flat[(trimap < FG_PROB).ravel()], config.components,
                           config.seed + 1, max_iters=2)

    result = GrabCutResult(mask=np.zeros((box.height, box.width), dtype=bool))
    prev_energy = np.inf
    for iteration in range(config.iterations):
        if iteration > 0:
            fg_model = gmm.refit(fg_model, flat[(trimap >= FG_PROB).ravel()])
            bg_model = gmm.refit(bg_model, flat[(trimap < FG_PROB).ravel()])

        unknown = (trimap == BG_PROB) | (trimap == FG_PROB)
        source = np.zeros(trimap.shape)
        sink = np.zeros(trimap.shape)
        uflat = unknown.ravel()
        # staying background pays the background model's cost and vice versa;
        # both links are shifted per pixel so capacities stay non-negative
        # (the shift is label-independent and restored into the energy)
        d_bg = -np.log(bg_model.density(flat[uflat]))
        d_fg = -np.log(fg_model.density(flat[uflat]))
        shift = np.minimum(d_bg, d_fg)
        source[unknown] = d_bg - shift
        sink[unknown] = d_fg - shift
        source[trimap == BG_HARD] = 0.0
        sink[trimap == BG_HARD] = hard_cap
        source[trimap == FG_HARD] = hard_cap
        sink[trimap == FG_HARD] = 0.0

        cut = solver.solve(source, sink)
        energy = cut.cut_value + float(shift.sum())
        if np.isfinite(prev_energy) and energy > prev_energy + 1e-9 * abs(prev_energy):
            break  # keep the previous, better labeling
        result.energies.append(energy)
        result.iterations = iteration + 1

        new_trimap = trimap.copy()
        new_trimap[unknown & cut.labels] = FG_PROB
        new_trimap[unknown & ~cut.labels] = BG_PROB
        converged = bool(np.array_equal(new_trimap, trimap))
        small_gain = (
            np.isfinite(prev_energy)
            and prev_energy - energy < _EARLY_STOP_REL * abs(prev_energy)
        )
        trimap = new_trimap
        prev_energy = energy
        if converged or small_gain:
            break

    fg = trimap >= FG_PROB
    if scale != 1.0:
        fg = np.asarray(
            Image.fromarray(fg.astype(np.uint8) * 255).resize(
                (crop.shape[1], crop.shape[0]), Image.NEAREST
            )
        ) >= 128
    mask = fg[crop_box.y_min: crop_box.y_max, crop_box.x_min: crop_box.x_max].copy()
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    if not mask.any():
        raise DegenerateSegmentationError(
            f"empty foreground after {result.iterations} iteration(s); "
            f"final energy {result.energies[-1] if result.energies else float('nan'):.3f} "
            "(box interior indistinguishable from background?)"
        )
    result.mask = mask
    return result
