"""Batch orchestration: estimate, calibrate, evaluate.

Scenes are the unit of work and of failure isolation; one failing scene is
reported and never aborts the batch. All randomness flows from a single root
seed, with per-segmentation seeds derived from stable string hashes so runs
are reproducible regardless of worker count or scene order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import calorimetry, dataset, evaluation, measurement
from .dataset import SIDE, TOP, FoodParams, GroundTruthRecord, SceneAnnotation, ShapeClass
from .errors import DegenerateFitError, DegenerateSegmentationError, MissingCalibrationError
from .segmentation import SegConfig, extract_profile, grabcut, largest_component, save_mask_png

log = logging.getLogger(__name__)

ESTIMATE_HEADER = [
    "scene_id", "food", "shape", "volume_cm3", "beta_applied",
    "alpha_top", "alpha_side", "mass_g", "calorie_kcal",
]
VOLUME_HEADER = ESTIMATE_HEADER[:7]
WARNING_HEADER = ["scene_id", "view", "food", "kind", "message"]
FIT_REPORT_HEADER = ["food", "n", "beta", "rho"]


@dataclass
class PipelineConfig:
    params: dict[str, FoodParams]
    coin_diameter_cm: float = measurement.DEFAULT_COIN_DIAMETER_CM
    seg: SegConfig = field(default_factory=SegConfig)
    seed: int = 42
    jobs: int = 1
    out_dir: Path | None = None
    dump_masks: bool = False

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class FoodEstimate:
    scene_id: str
    food: str
    shape: ShapeClass
    volume: float
    beta_applied: float
    alpha_top: float
    alpha_side: float
    mass: float | None = None
    calorie: float | None = None


@dataclass(frozen=True)
class SceneWarning:
    scene_id: str
    view: str  # "" when not view-specific
    food: str  # "" when not food-specific
    kind: str
    message: str


@dataclass
class SceneResult:
    scene_id: str
    estimates: list[FoodEstimate] = field(default_factory=list)
    warnings: list[SceneWarning] = field(default_factory=list)
    error: dict | None = None  # scene-fatal {kind, message}


@dataclass
class RunResult:
    scenes: list[SceneResult]

    @property
    def estimates(self) -> list[FoodEstimate]:
        rows = [e for s in self.scenes for e in s.estimates]
        return sorted(rows, key=lambda e: (e.scene_id, e.food))

    @property
    def warnings(self) -> list[SceneWarning]:
        rows = [w for s in self.scenes for w in s.warnings]
        return sorted(rows, key=lambda w: (w.scene_id, w.view, w.food, w.kind))

    @property
    def errors(self) -> list[dict]:
        return [
            {"scene_id": s.scene_id, **s.error} for s in self.scenes if s.error is not None
        ]


def _segmentation_seed(root: int, scene_id: str, view: str, index: int) -> int:
    digest = hashlib.sha256(f"{root}:{scene_id}:{view}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 31)


def _profile_entries(scene: SceneAnnotation, config: PipelineConfig,
                     warnings: list[SceneWarning], mask_dir: Path | None):
    """Segment every food detection of one view, highest score first."""
    image = dataset.load_image(scene.image_path)
    entries: list[tuple[str, object]] = []
    detections = sorted(
        scene.food_detections(), key=lambda d: (-d.score, d.box.x_min, d.box.y_min)
    )
    for index, det in enumerate(detections):
        seed = _segmentation_seed(config.seed, scene.scene_id, scene.view, index)
        seg = replace(config.seg, seed=seed)
        try:
            result = grabcut(image, det.box, seg)
            mask = largest_component(result.mask)
            entries.append((det.label, extract_profile(mask)))
        except DegenerateSegmentationError as exc:
            warnings.append(SceneWarning(
                scene.scene_id, scene.view, det.label, "degenerate-segmentation", str(exc)
            ))
            continue
        if mask_dir is not None:
            save_mask_png(mask, mask_dir / f"{scene.scene_id}_{scene.view}_{index}_{det.label}.png")
    return entries


def process_scene(scene_id: str, views: dict[str, SceneAnnotation],
                  config: PipelineConfig) -> SceneResult:
    """Full estimation for one scene; failures become the scene's error."""
    result = SceneResult(scene_id=scene_id)
    all_foods = sorted(
        {d.label for v in views.values() for d in v.food_detections()}
    )

    def abort(kind: str, message: str) -> SceneResult:
        result.error = {"kind": kind, "message": message}
        for food in all_foods:
            result.warnings.append(SceneWarning(scene_id, "", food, "scene-error", kind))
        return result

    missing = [v for v in (TOP, SIDE) if v not in views]
    if missing:
        return abort("missing-view", f"scene lacks view(s): {', '.join(missing)}")

    alphas = {}
    for view in (TOP, SIDE):
        try:
            coin = measurement.select_calibration(views[view].detections)
        except MissingCalibrationError as exc:
            return abort("missing-calibration", f"{view}: {exc}")
        alphas[view] = measurement.scale_factor(coin.box, view, config.coin_diameter_cm)

    mask_dir = None
    if config.dump_masks and config.out_dir is not None:
        mask_dir = config.out_dir / "masks"
        mask_dir.mkdir(parents=True, exist_ok=True)

    top_entries = _profile_entries(views[TOP], config, result.warnings, mask_dir)
    side_entries = _profile_entries(views[SIDE], config, result.warnings, mask_dir)
    matched = measurement.match_views(top_entries, side_entries, alphas[TOP], alphas[SIDE])
    for view, food in matched.unmatched:
        result.warnings.append(SceneWarning(scene_id, view, food, "unmatched",
                                            "no same-food profile in the other view"))

    for pair in matched.pairs:
        params = config.params.get(pair.food)
        if params is None:
            result.warnings.append(SceneWarning(scene_id, "", pair.food, "missing-params",
                                                "food has no parameter-table row"))
            continue
        estimate = measurement.estimate_volume(pair, params)
        mass = calorie = None
        if params.rho is not None:
            mass = calorimetry.estimate_mass(estimate.volume, params.rho)
            if params.energy is not None:
                calorie = calorimetry.estimate_calorie(mass, params.energy)
            else:
                result.warnings.append(SceneWarning(scene_id, "", pair.food, "missing-energy",
                                                    "no energy density; calorie skipped"))
        else:
            result.warnings.append(SceneWarning(scene_id, "", pair.food, "missing-density",
                                                "no density; mass/calorie skipped"))
        result.estimates.append(FoodEstimate(
            scene_id=scene_id, food=pair.food, shape=estimate.shape,
            volume=estimate.volume, beta_applied=estimate.beta_applied,
            alpha_top=pair.alpha_top.value, alpha_side=pair.alpha_side.value,
            mass=mass, calorie=calorie,
        ))
    return result


def _process_scene_star(args) -> SceneResult:
    return process_scene(*args)


def run_estimate(config: PipelineConfig, scenes: list[SceneAnnotation],
                 write: bool = True) -> RunResult:
    """Estimate volume/mass/calorie for every scene; write the CSV outputs."""
    grouped = dataset.group_scenes(scenes)
    work = [(scene_id, grouped[scene_id], config) for scene_id in sorted(grouped)]
    if config.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_process_scene_star, work))
    else:
        results = [process_scene(*w) for w in work]
    results.sort(key=lambda r: r.scene_id)
    run = RunResult(scenes=results)
    if write and config.out_dir is not None:
        write_outputs(run, config.out_dir)
    return run


def _fmt(value) -> str:
    if value is None:
        return ""
    out = repr(float(value))
    return out[:-2] if out.endswith(".0") else out


def write_outputs(run: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "estimates.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ESTIMATE_HEADER)
        for e in run.estimates:
            writer.writerow([e.scene_id, e.food, e.shape.value, _fmt(e.volume),
                             _fmt(e.beta_applied), _fmt(e.alpha_top), _fmt(e.alpha_side),
                             _fmt(e.mass), _fmt(e.calorie)])
    with (out_dir / "volumes.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(VOLUME_HEADER)
        for e in run.estimates:
            writer.writerow([e.scene_id, e.food, e.shape.value, _fmt(e.volume),
                             _fmt(e.beta_applied), _fmt(e.alpha_top), _fmt(e.alpha_side)])
    with (out_dir / "warnings.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WARNING_HEADER)
        for w in run.warnings:
            writer.writerow([w.scene_id, w.view, w.food, w.kind, w.message])
    with (out_dir / "errors.json").open("w", encoding="utf-8") as fh:
        json.dump(run.errors, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_estimates(path: str | Path) -> list[FoodEstimate]:
    """Read back an estimates.csv produced by :func:`run_estimate`."""
    path = Path(path)
    rows: list[FoodEstimate] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ESTIMATE_HEADER:
            raise ValueError(f"{path}: not an estimates CSV (header {reader.fieldnames})")
        for row in reader:
            rows.append(FoodEstimate(
                scene_id=row["scene_id"],
                food=row["food"],
                shape=ShapeClass.parse(row["shape"]),
                volume=float(row["volume_cm3"]),
                beta_applied=float(row["beta_applied"]),
                alpha_top=float(row["alpha_top"]),
                alpha_side=float(row["alpha_side"]),
                mass=float(row["mass_g"]) if row["mass_g"] else None,
                calorie=float(row["calorie_kcal"]) if row["calorie_kcal"] else None,
            ))
    return rows


@dataclass
class CalibrationResult:
    params: dict[str, FoodParams]
    fits: list[tuple[str, int, float, float]]  # (food, n, beta, rho)
    warnings: list[str]
    run: RunResult


def run_calibrate(config: PipelineConfig, scenes: list[SceneAnnotation],
                  ground_truth: list[GroundTruthRecord], write: bool = True) -> CalibrationResult:
    """Fit per-food compensation factors and densities from training scenes.

    Volumes are re-estimated with every compensation factor forced to 1 so
    the fitted ratio is anchored to raw formula output; densities come from
    the reference records alone.
    """
    raw_config = replace(
        config, params=dataset.with_unit_beta(config.params), out_dir=None, dump_masks=False
    )
    run = run_estimate(raw_config, scenes, write=False)
    truth = dataset.ground_truth_index(ground_truth)
    scene_ids = {s.scene_id for s in scenes}

    beta_records: dict[str, list[calorimetry.EstimationRecord]] = {}
    for est in run.estimates:
        ref = truth.get((est.scene_id, est.food))
        if ref is None:
            continue
        beta_records.setdefault(est.food, []).append(calorimetry.EstimationRecord(
            scene_id=est.scene_id, food=est.food,
            est_volume=est.volume, ref_volume=ref.volume, ref_mass=ref.mass,
        ))
    rho_records: dict[str, list[calorimetry.EstimationRecord]] = {}
    for record in ground_truth:
        if record.scene_id not in scene_ids:
            continue
        rho_records.setdefault(record.food, []).append(calorimetry.EstimationRecord(
            scene_id=record.scene_id, food=record.food,
            est_volume=0.0, ref_volume=record.volume, ref_mass=record.mass,
        ))

    fitted = dict(config.params)
    fits: list[tuple[str, int, float, float]] = []
    warnings: list[str] = []
    for food in sorted(fitted):
        params = fitted[food]
        b_recs = beta_records.get(food, [])
        r_recs = rho_records.get(food, [])
        if not b_recs or not r_recs:
            warnings.append(f"{food}: no training records; keeping "
                            f"beta={params.beta} rho={params.rho}")
            continue
        try:
            beta_fit = calorimetry.fit_beta(b_recs)
            rho_fit = calorimetry.fit_density(r_recs)
        except DegenerateFitError as exc:
            warnings.append(f"{food}: degenerate fit ({exc}); keeping defaults")
            continue
        fitted[food] = replace(params, beta=beta_fit.value, rho=rho_fit.value)
        fits.append((food, beta_fit.n_samples, beta_fit.value, rho_fit.value))
    for food in sorted(set(beta_records) - set(fitted)):
        warnings.append(f"{food}: training records but no parameter-table row; skipped")

    result = CalibrationResult(params=fitted, fits=fits, warnings=warnings, run=run)
    if write and config.out_dir is not None:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        dataset.save_params(fitted, config.out_dir / "fitted_params.csv")
        with (config.out_dir / "fit_report.csv").open("w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(FIT_REPORT_HEADER)
            for food, n, beta, rho in fits:
                writer.writerow([food, n, _fmt(beta), _fmt(rho)])
    return result


@dataclass
class EvaluationResult:
    summaries: list[evaluation.EvaluationSummary]
    excluded: list[tuple[str, str]]  # (scene_id, food) estimates without ground truth


def run_evaluate(config: PipelineConfig, estimates: list[FoodEstimate],
                 ground_truth: list[GroundTruthRecord], write: bool = True,
                 figures: bool = True) -> EvaluationResult:
    """Join estimates with references and build the per-food report."""
    truth = dataset.ground_truth_index(ground_truth)
    by_food: dict[str, list[calorimetry.EstimationRecord]] = {}
    excluded: list[tuple[str, str]] = []
    for est in estimates:
        ref = truth.get((est.scene_id, est.food))
        if ref is None:
            excluded.append((est.scene_id, est.food))
            log.warning("%s/%s: no ground truth; excluded", est.scene_id, est.food)
            continue
        if est.mass is None:
            excluded.append((est.scene_id, est.food))
            log.warning("%s/%s: no mass estimate; excluded", est.scene_id, est.food)
            continue
        by_food.setdefault(est.food, []).append(calorimetry.EstimationRecord(
            scene_id=est.scene_id, food=est.food,
            est_volume=est.volume, ref_volume=ref.volume,
            est_mass=est.mass, ref_mass=ref.mass, est_calorie=est.calorie,
        ))
    if not by_food:
        raise ValueError("no estimate joins any ground-truth record")

    summaries = [evaluation.summarize(records) for _, records in sorted(by_food.items())]
    result = EvaluationResult(summaries=summaries, excluded=excluded)
    if write and config.out_dir is not None:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        evaluation.emit_report(summaries, config.out_dir / "report.csv")
        if figures:
            from . import figures as figmod

            figmod.error_bars(summaries, config.out_dir / "report_errors.png")
            records = [r for recs in by_food.values() for r in recs]
            figmod.estimate_scatter(records, config.out_dir / "report_scatter.png")
    return result
