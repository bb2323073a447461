"""Synthetic scene rendering with analytically known volumes.

Shapes are axis-aligned solids centered at the origin (z up). Views are
orthographic: the top view projects along z, the side view along y. Masks
are sampled at pixel centers with no anti-aliasing, so foreground areas are
exactly countable; a calibration coin disk of known diameter is rendered in
both views. Shape centers land on pixel-grid corners, which makes boxes of
even pixel size exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
from matplotlib.path import Path as PolyPath
from PIL import Image
from scipy.integrate import simpson

from .dataset import ANNOTATION_HEADER, GROUND_TRUTH_HEADER, BoundingBox

COIN_DIAMETER_CM = 2.5
_REVOLVED_SLICES = 16385  # Simpson on a dense grid: relative error << 0.01%

FOOD_COLOR = (180, 60, 60)
BACKGROUND_COLOR = (240, 240, 240)
COIN_COLOR = (150, 120, 40)


@dataclass(frozen=True)
class Sphere:
    radius: float


@dataclass(frozen=True)
class Ellipsoid:
    a: float  # semi-axis along x
    b: float  # along y
    c: float  # along z


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float


@dataclass(frozen=True)
class Prism:
    """Vertical extrusion of a polygon cross-section (cm, about the origin)."""

    points: tuple[tuple[float, float], ...]
    height: float


@dataclass(frozen=True)
class Revolved:
    """Solid of revolution about the z axis: radius(z) on [z_min, z_max]."""

    profile: Callable[[np.ndarray], np.ndarray]
    z_min: float
    z_max: float


ShapeKind = Union[Sphere, Ellipsoid, Cylinder, Prism, Revolved]


@dataclass(frozen=True)
class ShapeSpec:
    kind: ShapeKind
    color: tuple[int, int, int] = FOOD_COLOR
    background: tuple[int, int, int] = BACKGROUND_COLOR

    def __post_init__(self) -> None:
        k = self.kind
        dims: tuple[float, ...]
        if isinstance(k, Sphere):
            dims = (k.radius,)
        elif isinstance(k, Ellipsoid):
            dims = (k.a, k.b, k.c)
        elif isinstance(k, Cylinder):
            dims = (k.radius, k.height)
        elif isinstance(k, Prism):
            dims = (k.height, _polygon_area(k.points))
        else:
            dims = (k.z_max - k.z_min, float(np.max(_profile_samples(k)[1])))
        if min(dims) <= 0:
            raise ValueError(f"shape dimensions must be positive: {k}")


@dataclass
class SyntheticScene:
    top: np.ndarray
    side: np.ndarray
    food_box_top: BoundingBox
    food_box_side: BoundingBox
    coin_box_top: BoundingBox
    coin_box_side: BoundingBox
    food_mask_top: np.ndarray
    food_mask_side: np.ndarray
    true_volume: float
    scale: float  # px per cm
    spec: ShapeSpec | None = field(repr=False, default=None)


def _polygon_area(points) -> float:
    xs = np.array([p[0] for p in points], float)
    ys = np.array([p[1] for p in points], float)
    return 0.5 * abs(float(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1))))


def _profile_samples(k: Revolved) -> tuple[np.ndarray, np.ndarray]:
    z = np.linspace(k.z_min, k.z_max, _REVOLVED_SLICES)
    return z, np.asarray(k.profile(z), dtype=float)


def oracle_volume(spec: ShapeSpec) -> float:
    """Closed-form volume, or dense Simpson integration for revolved solids."""
    k = spec.kind
    if isinstance(k, Sphere):
        return 4.0 / 3.0 * math.pi * k.radius ** 3
    if isinstance(k, Ellipsoid):
        return 4.0 / 3.0 * math.pi * k.a * k.b * k.c
    if isinstance(k, Cylinder):
        return math.pi * k.radius ** 2 * k.height
    if isinstance(k, Prism):
        return _polygon_area(k.points) * k.height
    z, r = _profile_samples(k)
    return math.pi * float(simpson(r ** 2, x=z))


def _extents(k: ShapeKind) -> tuple[float, float, float, float]:
    """(half_x, half_y, z_low, z_high) in cm."""
    if isinstance(k, Sphere):
        return k.radius, k.radius, -k.radius, k.radius
    if isinstance(k, Ellipsoid):
        return k.a, k.b, -k.c, k.c
    if isinstance(k, Cylinder):
        return k.radius, k.radius, -k.height / 2, k.height / 2
    if isinstance(k, Prism):
        xs = [p[0] for p in k.points]
        ys = [p[1] for p in k.points]
        half = max(abs(min(xs)), abs(max(xs))), max(abs(min(ys)), abs(max(ys)))
        return half[0], half[1], -k.height / 2, k.height / 2
    _, r = _profile_samples(k)
    rmax = float(np.max(r))
    return rmax, rmax, k.z_min, k.z_max


def _top_mask(k: ShapeKind, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx, yy = np.meshgrid(x, y)
    if isinstance(k, Sphere):
        return xx ** 2 + yy ** 2 <= k.radius ** 2
    if isinstance(k, Ellipsoid):
        return (xx / k.a) ** 2 + (yy / k.b) ** 2 <= 1.0
    if isinstance(k, Cylinder):
        return xx ** 2 + yy ** 2 <= k.radius ** 2
    if isinstance(k, Prism):
        path = PolyPath(np.asarray(k.points, float))
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        return path.contains_points(pts).reshape(xx.shape)
    _, r = _profile_samples(k)
    return xx ** 2 + yy ** 2 <= float(np.max(r)) ** 2


def _side_mask(k: ShapeKind, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    xx, zz = np.meshgrid(x, z)
    if isinstance(k, Sphere):
        return xx ** 2 + zz ** 2 <= k.radius ** 2
    if isinstance(k, Ellipsoid):
        return (xx / k.a) ** 2 + (zz / k.c) ** 2 <= 1.0
    if isinstance(k, Cylinder):
        return (np.abs(xx) <= k.radius) & (np.abs(zz) <= k.height / 2)
    if isinstance(k, Prism):
        xs = [p[0] for p in k.points]
        return (xx >= min(xs)) & (xx <= max(xs)) & (np.abs(zz) <= k.height / 2)
    inside = (zz >= k.z_min) & (zz <= k.z_max)
    radius = np.zeros_like(zz)
    radius[inside] = np.asarray(k.profile(zz[inside]), dtype=float)
    return inside & (np.abs(xx) <= radius)


def _tight_box(mask: np.ndarray) -> BoundingBox:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def render(
    spec: ShapeSpec,
    scale: float,
    noise: float = 0.0,
    seed: int = 0,
    canvas: tuple[int, int] | None = None,
    margin_px: int = 20,
    separation_px: int = 30,
) -> SyntheticScene:
    """Rasterize the top/side pair with a coin; deterministic per seed.

    ``scale`` is px per cm (>= 10). ``canvas`` forces an image size of
    (height, width) for both views; the shapes must fit or this raises.
    """
    if scale < 10:
        raise ValueError("scale below 10 px/cm is too coarse to rasterize")
    half_x, half_y, z_lo, z_hi = _extents(spec.kind)
    food_w = math.ceil(2 * half_x * scale)
    food_h_top = math.ceil(2 * half_y * scale)
    food_h_side = math.ceil((z_hi - z_lo) * scale)
    coin_px = round(COIN_DIAMETER_CM * scale)

    need_w = 2 * margin_px + food_w + separation_px + coin_px
    need_h = 2 * margin_px + max(food_h_top, food_h_side, coin_px)
    if canvas is None:
        height, width = need_h, need_w
    else:
        height, width = canvas
        if width < need_w or height < need_h:
            raise ValueError(
                f"shape + coin need {need_h}x{need_w} px, canvas is {height}x{width}"
            )

    food_cx = (width - coin_px - separation_px) // 2
    food_cy = height // 2
    coin_cx = width - margin_px - coin_px // 2
    coin_cy = height // 2

    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    x_cm = (cols - food_cx) / scale
    y_cm = (rows - food_cy) / scale  # top view: world y, sign irrelevant to extents
    z_cm = (food_cy - rows) / scale  # side view: image up = +z
    # recenter z on the shape's vertical midpoint so asymmetric solids fit
    z_cm = z_cm + (z_lo + z_hi) / 2.0

    food_top = _top_mask(spec.kind, x_cm, y_cm)
    food_side = _side_mask(spec.kind, x_cm, z_cm)

    # center parity must match the pixel diameter's parity or the tangent
    # rows/columns lose their pixel centers and the box comes out 1 px small
    coin_center_off = 0.5 if coin_px % 2 else 0.0
    coin_r_px = coin_px / 2.0
    cxx, cyy = np.meshgrid(cols - (coin_cx + coin_center_off),
                           rows - (coin_cy + coin_center_off))
    coin_mask = cxx ** 2 + cyy ** 2 <= coin_r_px ** 2

    rng = np.random.default_rng(seed)
    views = []
    for food_mask in (food_top, food_side):
        img = np.empty((height, width, 3), dtype=np.float64)
        img[:] = spec.background
        img[food_mask] = spec.color
        img[coin_mask] = COIN_COLOR
        if noise > 0:
            img += rng.normal(0.0, noise, img.shape)
        views.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))

    return SyntheticScene(
        top=views[0],
        side=views[1],
        food_box_top=_tight_box(food_top),
        food_box_side=_tight_box(food_side),
        coin_box_top=_tight_box(coin_mask),
        coin_box_side=_tight_box(coin_mask),
        food_mask_top=food_top,
        food_mask_side=food_side,
        true_volume=oracle_volume(spec),
        scale=scale,
        spec=spec,
    )


def regular_polygon(sides: int, radius: float) -> tuple[tuple[float, float], ...]:
    """Vertices of a regular polygon inscribed in a circle (cm)."""
    if sides < 3:
        raise ValueError("a polygon needs at least 3 sides")
    angles = 2 * math.pi * np.arange(sides) / sides
    return tuple((radius * math.cos(a), radius * math.sin(a)) for a in angles)


def bulge(radius: float, height: float) -> Revolved:
    """A smooth vase-like solid of revolution used as the irregular fixture."""

    def profile(z: np.ndarray) -> np.ndarray:
        return radius * (0.7 + 0.3 * np.cos(math.pi * np.asarray(z) / height))

    return Revolved(profile=profile, z_min=-height / 2, z_max=height / 2)


def _pad_box(box: BoundingBox, pad: int, width: int, height: int) -> BoundingBox:
    return BoundingBox(
        x_min=max(0, box.x_min - pad),
        y_min=max(0, box.y_min - pad),
        x_max=min(width, box.x_max + pad),
        y_max=min(height, box.y_max + pad),
    )


def write_scene(
    scene: SyntheticScene,
    out_dir: str | Path,
    scene_id: str,
    food: str,
    mass_g: float,
    box_pad: int = 12,
) -> Path:
    """Write top.png/side.png/annotations.csv/truth.csv as pipeline input.

    Food boxes are padded like a detector's loose boxes would be; the coin
    box stays tight because the scale factor is read from it.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(scene.top).save(out / "top.png", format="PNG")
    Image.fromarray(scene.side).save(out / "side.png", format="PNG")

    def rows_for(view: str, food_box: BoundingBox, coin_box: BoundingBox, img: np.ndarray):
        h, w = img.shape[:2]
        padded = _pad_box(food_box, box_pad, w, h)
        return [
            [scene_id, view, food, "0.95", padded.x_min, padded.y_min, padded.x_max, padded.y_max],
            [scene_id, view, "coin", "0.99", coin_box.x_min, coin_box.y_min,
             coin_box.x_max, coin_box.y_max],
        ]

    with (out / "annotations.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        writer.writerows(rows_for("top", scene.food_box_top, scene.coin_box_top, scene.top))
        writer.writerows(rows_for("side", scene.food_box_side, scene.coin_box_side, scene.side))

    with (out / "truth.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_HEADER)
        writer.writerow([scene_id, food, repr(scene.true_volume), repr(float(mass_g))])

    return out
