"""Pixel-to-centimeter calibration, view pairing and volume estimation.

A coin of known diameter in each view fixes that view's scale factor
(cm per pixel, from the mean of its box width and height). Each food's
top-view and side-view silhouettes are then combined by one of three
shape-class formulas:

* ellipsoid:  v = beta * (pi/4) * sum_k L_k^2 * alpha_side^3
* column:     v = beta * (s_top * alpha_top^2) * (H * alpha_side)
* irregular:  v = beta * (s_top * alpha_top^2) * sum_k (L_k / L_max)^2 * alpha_side

with L_k the side-view row counts, H the side silhouette's occupied row
extent, and s_top the top-view foreground area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import BoundingBox, Detection, FoodParams, ShapeClass, SIDE, TOP
from .errors import MissingCalibrationError
from .segmentation import SilhouetteProfile

DEFAULT_COIN_DIAMETER_CM = 2.5


@dataclass(frozen=True)
class ScaleFactor:
    value: float  # cm per pixel
    view: str

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValueError(f"scale factor must be finite and positive, got {self.value}")


@dataclass(frozen=True)
class ViewPair:
    food: str
    top_profile: SilhouetteProfile
    side_profile: SilhouetteProfile
    alpha_top: ScaleFactor
    alpha_side: ScaleFactor

    def __post_init__(self) -> None:
        if self.alpha_top.view != TOP or self.alpha_side.view != SIDE:
            raise ValueError("scale factors bound to the wrong views")


@dataclass(frozen=True)
class VolumeEstimate:
    food: str
    shape: ShapeClass
    volume: float  # cm3
    beta_applied: float


@dataclass(frozen=True)
class MatchResult:
    pairs: list[ViewPair]
    unmatched: list[tuple[str, str]]  # (view, food), never silently dropped


def select_calibration(detections: list[Detection]) -> Detection:
    """The calibration detection with the highest score.

    Ties break toward the smaller box, then the leftmost one. Raises
    :class:`MissingCalibrationError` when the view has no calibration object.
    """
    coins = [d for d in detections if d.is_calibration]
    if not coins:
        raise MissingCalibrationError("no calibration object detected")
    return min(coins, key=lambda d: (-d.score, d.box.area, d.box.x_min))


def scale_factor(coin_box: BoundingBox, view: str,
                 diameter_cm: float = DEFAULT_COIN_DIAMETER_CM) -> ScaleFactor:
    """cm-per-pixel from the coin box: diameter / mean(box width, box height)."""
    if diameter_cm <= 0:
        raise ValueError("calibration diameter must be positive")
    return ScaleFactor(value=diameter_cm / ((coin_box.width + coin_box.height) / 2.0), view=view)


def match_views(
    top: list[tuple[str, SilhouetteProfile]],
    side: list[tuple[str, SilhouetteProfile]],
    alpha_top: ScaleFactor,
    alpha_side: ScaleFactor,
) -> MatchResult:
    """Pair top entries with same-food side entries, each side used once.

    Entries are consumed in the given order (callers order by descending
    detection score); a top entry takes the first unused side entry of its
    food class. Leftovers are reported, not dropped.
    """
    used = [False] * len(side)
    pairs: list[ViewPair] = []
    unmatched: list[tuple[str, str]] = []
    for food, top_profile in top:
        match = next(
            (j for j, (sf, _) in enumerate(side) if not used[j] and sf == food), None
        )
        if match is None:
            unmatched.append((TOP, food))
            continue
        used[match] = True
        pairs.append(
            ViewPair(
                food=food,
                top_profile=top_profile,
                side_profile=side[match][1],
                alpha_top=alpha_top,
                alpha_side=alpha_side,
            )
        )
    unmatched.extend((SIDE, food) for j, (food, _) in enumerate(side) if not used[j])
    return MatchResult(pairs=pairs, unmatched=unmatched)


def estimate_volume(pair: ViewPair, params: FoodParams) -> VolumeEstimate:
    """Apply the shape class's volume formula to a matched view pair."""
    if params.food != pair.food:
        raise ValueError(f"params for {params.food!r} applied to {pair.food!r}")
    a_t = pair.alpha_top.value
    a_s = pair.alpha_side.value
    side = pair.side_profile
    counts = side.counts.astype(float)

    if params.shape is ShapeClass.ELLIPSOID:
        volume = (math.pi / 4.0) * float((counts ** 2).sum()) * a_s ** 3
    elif params.shape is ShapeClass.COLUMN:
        base_area = pair.top_profile.area * a_t ** 2
        volume = base_area * (side.occupied_height * a_s)
    else:  # irregular
        if side.max_count <= 0:
            raise ValueError("irregular formula needs a non-empty side profile")
        base_area = pair.top_profile.area * a_t ** 2
        volume = base_area * float(((counts / side.max_count) ** 2).sum()) * a_s
    return VolumeEstimate(
        food=pair.food, shape=params.shape, volume=params.beta * volume,
        beta_applied=params.beta,
    )
