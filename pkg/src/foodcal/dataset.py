"""Data ingestion: scene annotations, per-food parameters, ground-truth records.

File formats (all CSV files are UTF-8, LF, header required):

* annotations/detections: ``scene_id,view,label,score,x_min,y_min,x_max,y_max``
* params:                 ``food,shape,beta,rho,energy_kcal_per_g``
* ground truth:           ``scene_id,food,volume_cm3,mass_g``

A PASCAL-VOC-style XML directory is accepted as an alternative annotation
source (one file per image, named ``<scene_id>_<view>.xml``).
"""

from __future__ import annotations

import csv
import enum
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MalformedRecordError

log = logging.getLogger(__name__)

# Label reserved for the calibration object (a One Yuan coin in the
# reference dataset).  Detections with this label never enter food matching.
COIN_LABEL = "coin"

TOP = "top"
SIDE = "side"
VIEWS = (TOP, SIDE)


def normalize_label(raw: str) -> str:
    """Canonical food-class name: trimmed, lowercased, single-spaced."""
    return " ".join(raw.strip().lower().split())


class ShapeClass(enum.Enum):
    ELLIPSOID = "ellipsoid"
    COLUMN = "column"
    IRREGULAR = "irregular"

    @classmethod
    def parse(cls, raw: str) -> "ShapeClass":
        try:
            return cls(normalize_label(raw))
        except ValueError:
            raise MalformedRecordError(f"unknown shape class {raw!r}") from None


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box, half-open: width = x_max - x_min."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise MalformedRecordError(
                f"degenerate box ({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def within(self, width: int, height: int) -> bool:
        return 0 <= self.x_min and 0 <= self.y_min and self.x_max <= width and self.y_max <= height


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    label: str  # normalized food class or COIN_LABEL
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise MalformedRecordError(f"score {self.score} outside [0,1]")

    @property
    def is_calibration(self) -> bool:
        return self.label == COIN_LABEL


@dataclass
class SceneAnnotation:
    """All detections for one (scene, view) image."""

    scene_id: str
    view: str
    image_path: str
    detections: list[Detection] = field(default_factory=list)

    def food_detections(self) -> list[Detection]:
        return [d for d in self.detections if not d.is_calibration]

    def calibration_detections(self) -> list[Detection]:
        return [d for d in self.detections if d.is_calibration]


@dataclass(frozen=True)
class FoodParams:
    """Per-food conversion parameters.

    ``beta`` is the multiplicative volume compensation factor (1.0 until
    fitted), ``rho`` the density in g/cm3, ``energy`` the energy density in
    Kcal/g (user-supplied nutrition data, may be absent).
    """

    food: str
    shape: ShapeClass
    beta: float = 1.0
    rho: float | None = None
    energy: float | None = None

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise MalformedRecordError(f"{self.food}: non-positive beta {self.beta}")
        if self.rho is not None and self.rho <= 0:
            raise MalformedRecordError(f"{self.food}: non-positive rho {self.rho}")
        if self.energy is not None and self.energy < 0:
            raise MalformedRecordError(f"{self.food}: negative energy {self.energy}")


@dataclass(frozen=True)
class GroundTruthRecord:
    scene_id: str
    food: str
    volume: float  # cm3
    mass: float  # g

    def __post_init__(self) -> None:
        if self.volume <= 0:
            raise MalformedRecordError(f"{self.scene_id}/{self.food}: non-positive volume")
        if self.mass <= 0:
            raise MalformedRecordError(f"{self.scene_id}/{self.food}: non-positive mass")


ANNOTATION_HEADER = ["scene_id", "view", "label", "score", "x_min", "y_min", "x_max", "y_max"]
PARAMS_HEADER = ["food", "shape", "beta", "rho", "energy_kcal_per_g"]
GROUND_TRUTH_HEADER = ["scene_id", "food", "volume_cm3", "mass_g"]
NUTRITION_HEADER = ["food", "energy_kcal_per_g"]


def _open_csv(path: Path, expected_header: list[str]):
    if not path.exists():
        raise MalformedRecordError("file not found", path=str(path))
    handle = path.open("r", encoding="utf-8", newline="")
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise MalformedRecordError("empty file, header required", path=str(path)) from None
    if [h.strip() for h in header] != expected_header:
        handle.close()
        raise MalformedRecordError(
            f"bad header {header!r}, expected {expected_header!r}", path=str(path), line=1
        )
    return handle, reader


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/JPEG into an 8-bit RGB array of shape (H, W, 3)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise MalformedRecordError(f"not an RGB raster: shape {arr.shape}", path=str(path))
    return arr


def _image_size(path: str | Path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size  # (width, height)


def _resolve_image(directory: Path, scene_id: str, view: str, single_scene: bool) -> Path:
    """Locate the image for (scene_id, view) next to the annotation file.

    Tries ``<scene_id>_<view>.<ext>`` first, then the bare ``<view>.<ext>``
    layout used by single-scene directories (the synthetic scene writer).
    """
    stems = [f"{scene_id}_{view}"]
    if single_scene:
        stems.append(view)
    for stem in stems:
        for ext in ("png", "jpg", "jpeg"):
            candidate = directory / f"{stem}.{ext}"
            if candidate.exists():
                return candidate
    raise MalformedRecordError(
        f"no image found for scene {scene_id!r} view {view!r} (tried {stems} with png/jpg/jpeg)",
        path=str(directory),
    )


def load_annotations(path: str | Path, format: str = "csv") -> list[SceneAnnotation]:
    """Load detector output for one or more scenes.

    ``format`` is ``csv`` (normative fixture format) or ``voc-xml``.  Every
    referenced image must exist and every box must lie within it; duplicate
    (scene_id, view) entries across files are rejected.
    """
    path = Path(path)
    if format == "csv":
        scenes = _load_annotations_csv(path)
    elif format == "voc-xml":
        scenes = _load_annotations_voc(path)
    else:
        raise ValueError(f"unknown annotation format {format!r}")

    for scene in scenes:
        width, height = _image_size(scene.image_path)
        for det in scene.detections:
            if not det.box.within(width, height):
                raise MalformedRecordError(
                    f"box {det.box} outside {width}x{height} image",
                    path=scene.image_path,
                )
    return scenes


def _load_annotations_csv(path: Path) -> list[SceneAnnotation]:
    handle, reader = _open_csv(path, ANNOTATION_HEADER)
    rows = []
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ANNOTATION_HEADER):
                raise MalformedRecordError(
                    f"expected {len(ANNOTATION_HEADER)} fields, got {len(row)}",
                    path=str(path), line=lineno,
                )
            try:
                scene_id = row[0].strip()
                view = row[1].strip().lower()
                label = normalize_label(row[2])
                score = float(row[3])
                coords = [int(v) for v in row[4:8]]
            except ValueError as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            if view not in VIEWS:
                raise MalformedRecordError(f"bad view {view!r}", path=str(path), line=lineno)
            if not scene_id or not label:
                raise MalformedRecordError("empty scene_id or label", path=str(path), line=lineno)
            try:
                det = Detection(box=BoundingBox(*coords), label=label, score=score)
            except MalformedRecordError as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            rows.append((scene_id, view, det))

    scene_ids = {sid for sid, _, _ in rows}
    single_scene = len(scene_ids) == 1
    scenes: dict[tuple[str, str], SceneAnnotation] = {}
    for scene_id, view, det in rows:
        key = (scene_id, view)
        if key not in scenes:
            image = _resolve_image(path.parent, scene_id, view, single_scene)
            scenes[key] = SceneAnnotation(scene_id=scene_id, view=view, image_path=str(image))
        scenes[key].detections.append(det)
    return [scenes[k] for k in sorted(scenes)]


def _load_annotations_voc(path: Path) -> list[SceneAnnotation]:
    if path.is_dir():
        files = sorted(path.glob("*.xml"))
    else:
        files = [path]
    if not files:
        raise MalformedRecordError("no XML annotation files found", path=str(path))

    scenes = []
    seen: set[tuple[str, str]] = set()
    for file in files:
        try:
            root = ET.parse(file).getroot()
        except ET.ParseError as exc:
            raise MalformedRecordError(f"XML parse error: {exc}", path=str(file)) from None
        stem = file.stem
        if "_" not in stem or stem.rsplit("_", 1)[1] not in VIEWS:
            raise MalformedRecordError(
                "VOC file name must be <scene_id>_<view>.xml", path=str(file)
            )
        scene_id, view = stem.rsplit("_", 1)
        if (scene_id, view) in seen:
            raise MalformedRecordError(f"duplicate scene/view {scene_id}/{view}", path=str(file))
        seen.add((scene_id, view))

        path_node = root.find("path")
        filename_node = root.find("filename")
        if path_node is not None and path_node.text:
            image = Path(path_node.text)
            if not image.is_absolute():
                image = file.parent / image
        elif filename_node is not None and filename_node.text:
            image = file.parent / filename_node.text
        else:
            raise MalformedRecordError("missing <path>/<filename>", path=str(file))
        if not image.exists():
            raise MalformedRecordError(f"image {image} not found", path=str(file))

        detections = []
        for obj in root.findall("object"):
            name = obj.findtext("name")
            if not name:
                raise MalformedRecordError("object without <name>", path=str(file))
            score_text = obj.findtext("score")
            score = float(score_text) if score_text else 1.0
            bnd = obj.find("bndbox")
            if bnd is None:
                raise MalformedRecordError(f"object {name!r} without <bndbox>", path=str(file))
            try:
                box = BoundingBox(
                    x_min=int(float(bnd.findtext("xmin"))),
                    y_min=int(float(bnd.findtext("ymin"))),
                    x_max=int(float(bnd.findtext("xmax"))),
                    y_max=int(float(bnd.findtext("ymax"))),
                )
            except (TypeError, ValueError) as exc:
                raise MalformedRecordError(f"bad bndbox: {exc}", path=str(file)) from None
            detections.append(Detection(box=box, label=normalize_label(name), score=score))
        scenes.append(
            SceneAnnotation(scene_id=scene_id, view=view, image_path=str(image), detections=detections)
        )
    return sorted(scenes, key=lambda s: (s.scene_id, s.view))


def load_detections_table(path: str | Path) -> list[tuple[str, str, Detection]]:
    """Detection CSV rows as (scene_id, view, detection), without touching images.

    Used by detection evaluation, where only boxes and scores matter and the
    underlying images need not be present.
    """
    path = Path(path)
    handle, reader = _open_csv(path, ANNOTATION_HEADER)
    rows: list[tuple[str, str, Detection]] = []
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ANNOTATION_HEADER):
                raise MalformedRecordError(
                    f"expected {len(ANNOTATION_HEADER)} fields, got {len(row)}",
                    path=str(path), line=lineno,
                )
            try:
                det = Detection(
                    box=BoundingBox(*(int(v) for v in row[4:8])),
                    label=normalize_label(row[2]),
                    score=float(row[3]),
                )
            except (ValueError, MalformedRecordError) as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            rows.append((row[0].strip(), row[1].strip().lower(), det))
    return rows


def save_annotations(scenes: list[SceneAnnotation], path: str | Path) -> None:
    """Write annotations back out in the normative CSV format."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for scene in scenes:
            for det in scene.detections:
                writer.writerow(
                    [scene.scene_id, scene.view, det.label, _fmt(det.score),
                     det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max]
                )


def group_scenes(scenes: list[SceneAnnotation]) -> dict[str, dict[str, SceneAnnotation]]:
    """Group annotations into {scene_id: {view: annotation}} pairs.

    Raises on a duplicate (scene_id, view): at most one image per view may
    enter the pipeline for a scene.
    """
    grouped: dict[str, dict[str, SceneAnnotation]] = {}
    for scene in scenes:
        views = grouped.setdefault(scene.scene_id, {})
        if scene.view in views:
            raise MalformedRecordError(
                f"duplicate view {scene.view!r} for scene {scene.scene_id!r}"
            )
        views[scene.view] = scene
    return grouped


def unknown_labels(scenes: list[SceneAnnotation], known_foods) -> list[tuple[str, str, str]]:
    """Labels that resolve to neither a known food nor the calibration marker.

    Returns (scene_id, view, label) triples; callers surface these as a
    report, the detections themselves are never dropped.
    """
    known = {normalize_label(f) for f in known_foods} | {COIN_LABEL}
    report = []
    for scene in scenes:
        for det in scene.detections:
            if det.label not in known:
                report.append((scene.scene_id, scene.view, det.label))
    return report


def load_params(path: str | Path) -> dict[str, FoodParams]:
    """Load the per-food parameter table, keyed by normalized food name."""
    path = Path(path)
    handle, reader = _open_csv(path, PARAMS_HEADER)
    table: dict[str, FoodParams] = {}
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PARAMS_HEADER):
                raise MalformedRecordError(
                    f"expected {len(PARAMS_HEADER)} fields, got {len(row)}",
                    path=str(path), line=lineno,
                )
            food = normalize_label(row[0])
            try:
                params = FoodParams(
                    food=food,
                    shape=ShapeClass.parse(row[1]),
                    beta=float(row[2]),
                    rho=float(row[3]) if row[3].strip() else None,
                    energy=float(row[4]) if row[4].strip() else None,
                )
            except (ValueError, MalformedRecordError) as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            if food in table:
                raise MalformedRecordError(f"duplicate food {food!r}", path=str(path), line=lineno)
            table[food] = params
    return table


def save_params(table: dict[str, FoodParams], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PARAMS_HEADER)
        for food in sorted(table):
            p = table[food]
            writer.writerow(
                [p.food, p.shape.value, _fmt(p.beta),
                 _fmt(p.rho) if p.rho is not None else "",
                 _fmt(p.energy) if p.energy is not None else ""]
            )


def default_params() -> dict[str, FoodParams]:
    """The shipped 19-food parameter table (fitted beta/rho, no energies)."""
    ref = resources.files("foodcal").joinpath("data/default_params.csv")
    with resources.as_file(ref) as path:
        return load_params(path)


def load_ground_truth(path: str | Path) -> list[GroundTruthRecord]:
    path = Path(path)
    handle, reader = _open_csv(path, GROUND_TRUTH_HEADER)
    records: list[GroundTruthRecord] = []
    keys: set[tuple[str, str]] = set()
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(GROUND_TRUTH_HEADER):
                raise MalformedRecordError(
                    f"expected {len(GROUND_TRUTH_HEADER)} fields, got {len(row)}",
                    path=str(path), line=lineno,
                )
            try:
                record = GroundTruthRecord(
                    scene_id=row[0].strip(),
                    food=normalize_label(row[1]),
                    volume=float(row[2]),
                    mass=float(row[3]),
                )
            except (ValueError, MalformedRecordError) as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            key = (record.scene_id, record.food)
            if key in keys:
                raise MalformedRecordError(f"duplicate key {key}", path=str(path), line=lineno)
            keys.add(key)
            records.append(record)
    return records


def save_ground_truth(records: list[GroundTruthRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_HEADER)
        for r in records:
            writer.writerow([r.scene_id, r.food, _fmt(r.volume), _fmt(r.mass)])


def ground_truth_index(records: list[GroundTruthRecord]) -> dict[tuple[str, str], GroundTruthRecord]:
    return {(r.scene_id, r.food): r for r in records}


def load_nutrition(path: str | Path) -> dict[str, float]:
    """Energy densities (Kcal/g) keyed by food; user-supplied data."""
    path = Path(path)
    handle, reader = _open_csv(path, NUTRITION_HEADER)
    table: dict[str, float] = {}
    with handle:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRecordError("expected 2 fields", path=str(path), line=lineno)
            food = normalize_label(row[0])
            try:
                energy = float(row[1])
            except ValueError as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from None
            if energy < 0:
                raise MalformedRecordError(f"negative energy {energy}", path=str(path), line=lineno)
            if food in table:
                raise MalformedRecordError(f"duplicate food {food!r}", path=str(path), line=lineno)
            table[food] = energy
    return table


def merge_nutrition(params: dict[str, FoodParams], nutrition: dict[str, float]) -> dict[str, FoodParams]:
    """Attach energy densities to a params table (nutrition wins)."""
    return {
        food: replace(p, energy=nutrition.get(food, p.energy)) for food, p in params.items()
    }


def with_unit_beta(table: dict[str, FoodParams]) -> dict[str, FoodParams]:
    """Copy of a params table with every compensation factor reset to 1.0."""
    return {food: replace(p, beta=1.0) for food, p in table.items()}


def _fmt(value: float) -> str:
    """Shortest round-trip decimal form; integers drop the trailing .0."""
    out = repr(float(value))
    return out[:-2] if out.endswith(".0") else out
