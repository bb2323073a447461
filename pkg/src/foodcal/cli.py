"""Command-line interface.

Subcommands: ``estimate``, ``calibrate``, ``evaluate``, ``segment``,
``synth``, ``detect-eval``. Exit codes: 0 success, 1 hard error, 2 partial
(per-scene failures occurred but the batch finished).
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import dataset, evaluation, pipeline, synth
from .dataset import BoundingBox
from .errors import FoodcalError
from .measurement import DEFAULT_COIN_DIAMETER_CM
from .segmentation import SegConfig, grabcut, save_mask_png

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_HARD = 1
EXIT_PARTIAL = 2


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_HARD)


def _parse_box(text: str) -> BoundingBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise click.BadParameter("box must be x_min,y_min,x_max,y_max")
    return BoundingBox(*(int(p) for p in parts))


def _load_sources(sources: tuple[str, ...], fmt: str) -> list[dataset.SceneAnnotation]:
    scenes: list[dataset.SceneAnnotation] = []
    for source in sources:
        path = Path(source)
        if path.is_dir() and fmt == "csv":
            path = path / "annotations.csv"
        scenes.extend(dataset.load_annotations(path, format=fmt))
    return scenes


@click.group()
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Food parameter CSV (default: shipped table).")
@click.option("--nutrition", "nutrition_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Energy-density CSV (food,energy_kcal_per_g).")
@click.option("--coin-diameter-cm", default=DEFAULT_COIN_DIAMETER_CM, show_default=True,
              help="Real diameter of the calibration object.")
@click.option("--seed", default=42, show_default=True, help="Root seed for all randomness.")
@click.option("--jobs", default=1, show_default=True, help="Parallel scene workers.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--seg-max-side", default=600, show_default=True,
              help="Downscale segmentation crops beyond this side length (seg.max-side).")
@click.option("--seg-gamma", default=50.0, show_default=True,
              help="Smoothness weight (seg.gamma).")
@click.option("--seg-components", default=5, show_default=True,
              help="Color-model components per side (seg.components).")
@click.option("--seg-iterations", default=5, show_default=True,
              help="Maximum refinement iterations (seg.iterations).")
@click.option("--seg-seed", default=None, type=int,
              help="Segmentation seed (seg.seed; defaults to --seed).")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, params_path, nutrition_path, coin_diameter_cm, seed, jobs, out_dir,
         seg_max_side, seg_gamma, seg_components, seg_iterations, seg_seed, verbose):
    """Estimate food volume, mass and calories from paired top/side images."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        params = dataset.load_params(params_path) if params_path else dataset.default_params()
        if nutrition_path:
            params = dataset.merge_nutrition(params, dataset.load_nutrition(nutrition_path))
    except FoodcalError as exc:
        _fail(str(exc))
    seg = SegConfig(
        max_side=seg_max_side, gamma=seg_gamma, components=seg_components,
        iterations=seg_iterations, seed=seed if seg_seed is None else seg_seed,
    )
    ctx.obj = pipeline.PipelineConfig(
        params=params, coin_diameter_cm=coin_diameter_cm, seg=seg,
        seed=seed, jobs=jobs, out_dir=Path(out_dir),
    )


@main.command()
@click.argument("sources", nargs=-1, required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "voc-xml"]), default="csv",
              show_default=True)
@click.option("--dump-masks", is_flag=True, help="Write each food's mask PNG.")
@click.pass_obj
def estimate(config: pipeline.PipelineConfig, sources, fmt, dump_masks):
    """Run the full estimation pipeline over annotated scenes.

    SOURCES are annotation CSV/XML files or scene directories containing
    annotations.csv next to the images.
    """
    config.dump_masks = dump_masks
    try:
        scenes = _load_sources(sources, fmt)
        unknown = dataset.unknown_labels(scenes, config.params)
        for scene_id, view, label in unknown:
            click.echo(f"warning: unknown label {label!r} in {scene_id}/{view}", err=True)
        run = pipeline.run_estimate(config, scenes)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"{len(run.estimates)} estimate(s), {len(run.warnings)} warning(s), "
               f"{len(run.errors)} scene error(s) -> {config.out_dir}")
    sys.exit(EXIT_PARTIAL if run.errors else EXIT_OK)


@main.command()
@click.argument("sources", nargs=-1, required=True)
@click.option("--ground-truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "voc-xml"]), default="csv",
              show_default=True)
@click.pass_obj
def calibrate(config: pipeline.PipelineConfig, sources, truth_path, fmt):
    """Fit per-food compensation factors and densities from training scenes."""
    try:
        scenes = _load_sources(sources, fmt)
        truth = dataset.load_ground_truth(truth_path)
        result = pipeline.run_calibrate(config, scenes, truth)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    for food, n, beta, rho in result.fits:
        click.echo(f"{food}: n={n} beta={beta:.4f} rho={rho:.4f}")
    click.echo(f"fitted params -> {config.out_dir / 'fitted_params.csv'}")
    sys.exit(EXIT_PARTIAL if result.run.errors else EXIT_OK)


@main.command()
@click.argument("estimates_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--ground-truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render error-bar and scatter figures beside the report.")
@click.pass_obj
def evaluate(config: pipeline.PipelineConfig, estimates_csv, truth_path, figures):
    """Per-food error report from an estimates CSV and a ground-truth CSV."""
    try:
        estimates = pipeline.load_estimates(estimates_csv)
        truth = dataset.load_ground_truth(truth_path)
        result = pipeline.run_evaluate(config, estimates, truth, figures=figures)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))
    header = f"{'food':<20}{'n_img':>6}{'vol':>10}{'est_vol':>10}{'vol%':>8}" \
             f"{'mass':>10}{'est_mass':>10}{'mass%':>8}"
    click.echo(header)
    for s in result.summaries:
        click.echo(f"{s.food:<20}{2 * s.n_estimations:>6}"
                   f"{s.mean_ref_volume:>10.2f}{s.mean_est_volume:>10.2f}"
                   f"{100 * s.mean_volume_error:>8.2f}"
                   f"{s.mean_ref_mass:>10.2f}{s.mean_est_mass:>10.2f}"
                   f"{100 * s.mean_mass_error:>8.2f}")
    for scene_id, food in result.excluded:
        click.echo(f"warning: {scene_id}/{food} excluded (no usable reference)", err=True)
    click.echo(f"report -> {config.out_dir / 'report.csv'}")


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--box", required=True, help="Foreground box as x_min,y_min,x_max,y_max.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Mask PNG path (default <out-dir>/mask.png).")
@click.pass_obj
def segment(config: pipeline.PipelineConfig, image, box, out_path):
    """Segment a single image region and dump the mask PNG (debug aid)."""
    try:
        raster = dataset.load_image(image)
        result = grabcut(raster, _parse_box(box), config.seg)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))
    out = Path(out_path) if out_path else config.out_dir / "mask.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mask_png(result.mask, out)
    click.echo(f"{int(result.mask.sum())} foreground px in {result.iterations} iteration(s) "
               f"-> {out}")


@main.command()
@click.option("--shape", type=click.Choice(["sphere", "ellipsoid", "cylinder", "prism",
                                            "revolved"]), default="sphere", show_default=True)
@click.option("--radius", default=1.5, show_default=True, help="Radius in cm.")
@click.option("--height", default=2.5, show_default=True, help="Height in cm.")
@click.option("--semi-axes", default=None, help="Ellipsoid a,b,c in cm.")
@click.option("--sides", default=6, show_default=True, help="Prism cross-section sides.")
@click.option("--scale", default=40.0, show_default=True, help="Pixels per cm.")
@click.option("--noise", default=0.0, show_default=True, help="Gaussian pixel noise sigma.")
@click.option("--canvas", default=None, help="Force canvas size as HEIGHTxWIDTH.")
@click.option("--food", default="apple", show_default=True, help="Food label to annotate.")
@click.option("--rho", default=1.0, show_default=True,
              help="Density used to derive the reference mass.")
@click.option("--scene-id", default="synth01", show_default=True)
@click.option("--dir", "scene_dir", type=click.Path(file_okay=False), default=None,
              help="Scene directory (default <out-dir>/<scene-id>).")
@click.pass_obj
def synth_cmd(config: pipeline.PipelineConfig, shape, radius, height, semi_axes, sides,
              scale, noise, canvas, food, rho, scene_id, scene_dir):
    """Render a synthetic scene with known volume as pipeline input."""
    try:
        if shape == "sphere":
            kind = synth.Sphere(radius=radius)
        elif shape == "ellipsoid":
            if semi_axes:
                a, b, c = (float(v) for v in semi_axes.split(","))
            else:
                a = b = c = radius
            kind = synth.Ellipsoid(a=a, b=b, c=c)
        elif shape == "cylinder":
            kind = synth.Cylinder(radius=radius, height=height)
        elif shape == "prism":
            kind = synth.Prism(points=synth.regular_polygon(sides, radius), height=height)
        else:
            kind = synth.bulge(radius=radius, height=height)
        canvas_hw = None
        if canvas:
            h, w = (int(v) for v in canvas.lower().split("x"))
            canvas_hw = (h, w)
        scene = synth.render(synth.ShapeSpec(kind=kind), scale=scale, noise=noise,
                             seed=config.seed, canvas=canvas_hw)
        out = Path(scene_dir) if scene_dir else config.out_dir / scene_id
        synth.write_scene(scene, out, scene_id=scene_id, food=food,
                          mass_g=rho * scene.true_volume)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"true volume {scene.true_volume:.3f} cm3 -> {out}")


main.add_command(synth_cmd, name="synth")


@main.command("detect-eval")
@click.argument("predictions_csv", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--iou-threshold", default=0.5, show_default=True)
@click.option("--interpolation", type=click.Choice(["all", "11point"]), default="all",
              show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_obj
def detect_eval(config: pipeline.PipelineConfig, predictions_csv, truth_csv,
                iou_threshold, interpolation, figures):
    """Average precision of predicted boxes against ground-truth boxes.

    Both CSVs use the annotation schema; images are keyed by scene and view.
    """
    import csv as _csv

    try:
        preds = dataset.load_detections_table(predictions_csv)
        truths = dataset.load_detections_table(truth_csv)
    except (FoodcalError, OSError, ValueError) as exc:
        _fail(str(exc))

    labels = sorted({d.label for _, _, d in truths})
    rows = []
    aps = []
    config.out_dir.mkdir(parents=True, exist_ok=True)
    for label in labels:
        p = [evaluation.BoxPrediction(f"{sid}/{view}", d.box, d.score)
             for sid, view, d in preds if d.label == label]
        t = [evaluation.BoxTruth(f"{sid}/{view}", d.box)
             for sid, view, d in truths if d.label == label]
        ap = evaluation.average_precision(p, t, iou_threshold, interpolation)
        aps.append(ap)
        rows.append([label, len(t), len(p), f"{ap:.6f}"])
        click.echo(f"{label}: AP = {ap:.4f} ({len(p)} predictions, {len(t)} truths)")
        if figures and p:
            matches = evaluation.match_detections(p, t, iou_threshold)
            tp = [m.truth is not None for m in matches]
            import numpy as np

            cum_tp = np.cumsum(tp)
            recall = cum_tp / len(t)
            precision = cum_tp / np.arange(1, len(tp) + 1)
            from . import figures as figmod

            figmod.pr_curve(recall, precision, ap, label,
                            config.out_dir / f"pr_{label.replace(' ', '_')}.png")
    mean_ap = sum(aps) / len(aps) if aps else 0.0
    click.echo(f"mAP = {mean_ap:.4f}")
    with (config.out_dir / "ap.csv").open("w", encoding="utf-8", newline="\n") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "n_truth", "n_predictions", "ap"])
        writer.writerows(rows)
        writer.writerow(["mAP", "", "", f"{mean_ap:.6f}"])


if __name__ == "__main__":
    main()
