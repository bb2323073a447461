import math

import numpy as np
import pytest

from foodcal import synth
from foodcal.dataset import BoundingBox, Detection, FoodParams, ShapeClass
from foodcal.errors import MissingCalibrationError
from foodcal.measurement import (
    MatchResult,
    ScaleFactor,
    ViewPair,
    estimate_volume,
    match_views,
    scale_factor,
    select_calibration,
)
from foodcal.segmentation import extract_profile

ALPHA_T = ScaleFactor(0.025, "top")
ALPHA_S = ScaleFactor(0.025, "side")


def _detection(label, score, box=(0, 0, 10, 10)):
    return Detection(box=BoundingBox(*box), label=label, score=score)


def _scene_pair(scene, food="x"):
    at = scale_factor(scene.coin_box_top, "top")
    a_s = scale_factor(scene.coin_box_side, "side")
    return ViewPair(food, extract_profile(scene.food_mask_top),
                    extract_profile(scene.food_mask_side), at, a_s)


# ------------------------------------------------------- calibration

def test_select_calibration_highest_score():
    coins = [_detection("coin", 0.7), _detection("coin", 0.95)]
    assert select_calibration(coins + [_detection("apple", 0.99)]).score == 0.95


def test_select_calibration_single():
    coin = _detection("coin", 0.5)
    assert select_calibration([coin]) is coin


def test_select_calibration_missing():
    with pytest.raises(MissingCalibrationError):
        select_calibration([_detection("apple", 0.9)])


def test_select_calibration_tie_breaks():
    small = _detection("coin", 0.9, (50, 0, 60, 10))
    large = _detection("coin", 0.9, (0, 0, 20, 20))
    assert select_calibration([large, small]) is small
    left = _detection("coin", 0.9, (0, 0, 10, 10))
    right = _detection("coin", 0.9, (30, 0, 40, 10))
    assert select_calibration([right, left]) is left


@pytest.mark.parametrize("w,h,expected", [(100, 100, 0.025), (90, 110, 0.025), (250, 250, 0.01)])
def test_scale_factor_values(w, h, expected):
    box = BoundingBox(0, 0, w, h)
    assert scale_factor(box, "side").value == pytest.approx(expected, rel=1e-12)


def test_scale_factor_custom_diameter():
    box = BoundingBox(0, 0, 100, 100)
    assert scale_factor(box, "top", diameter_cm=5.0).value == pytest.approx(0.05)


# ------------------------------------------------------- matching

def _profile(height=4):
    mask = np.ones((height, 3), bool)
    return extract_profile(mask)


def test_match_views_simple_pair():
    result = match_views([("apple", _profile())], [("apple", _profile())], ALPHA_T, ALPHA_S)
    assert len(result.pairs) == 1 and result.unmatched == []


def test_match_views_unmatched_top():
    result = match_views(
        [("apple", _profile()), ("banana", _profile())], [("banana", _profile())],
        ALPHA_T, ALPHA_S,
    )
    assert [p.food for p in result.pairs] == ["banana"]
    assert result.unmatched == [("top", "apple")]


def test_match_views_never_reuses_side():
    result = match_views(
        [("apple", _profile()), ("apple", _profile())], [("apple", _profile())],
        ALPHA_T, ALPHA_S,
    )
    assert len(result.pairs) == 1
    assert result.unmatched == [("top", "apple")]


def test_match_views_accounting():
    rng = np.random.default_rng(4)
    foods = ["apple", "banana", "egg"]
    top = [(foods[rng.integers(3)], _profile()) for _ in range(8)]
    side = [(foods[rng.integers(3)], _profile()) for _ in range(6)]
    result: MatchResult = match_views(top, side, ALPHA_T, ALPHA_S)
    assert 2 * len(result.pairs) + len(result.unmatched) == len(top) + len(side)
    for pair in result.pairs:
        assert pair.top_profile is not pair.side_profile
    # no side profile used twice
    used = [id(p.side_profile) for p in result.pairs]
    assert len(used) == len(set(used))


# ------------------------------------------------------- volume formulas

def test_column_formula_matches_cylinder():
    scene = synth.render(synth.ShapeSpec(synth.Cylinder(1.25, 2.5)), scale=40)
    pair = _scene_pair(scene)
    params = FoodParams("x", ShapeClass.COLUMN, beta=1.0, rho=1.0)
    estimate = estimate_volume(pair, params)
    analytic = math.pi * 1.25 ** 2 * 2.5
    assert estimate.volume == pytest.approx(analytic, rel=0.005)


def test_ellipsoid_formula_matches_sphere():
    scene = synth.render(synth.ShapeSpec(synth.Sphere(1.5)), scale=40)
    pair = _scene_pair(scene)
    estimate = estimate_volume(pair, FoodParams("x", ShapeClass.ELLIPSOID))
    assert estimate.volume == pytest.approx(4 / 3 * math.pi * 1.5 ** 3, rel=0.02)


def test_irregular_formula_matches_sphere():
    scene = synth.render(synth.ShapeSpec(synth.Sphere(1.5)), scale=40)
    pair = _scene_pair(scene)
    estimate = estimate_volume(pair, FoodParams("x", ShapeClass.IRREGULAR))
    assert estimate.volume == pytest.approx(4 / 3 * math.pi * 1.5 ** 3, rel=0.02)


def test_beta_linearity_exact():
    scene = synth.render(synth.ShapeSpec(synth.Sphere(1.0)), scale=40)
    pair = _scene_pair(scene)
    for shape in ShapeClass:
        base = estimate_volume(pair, FoodParams("x", shape, beta=1.0)).volume
        scaled = estimate_volume(pair, FoodParams("x", shape, beta=1.08)).volume
        assert scaled == 1.08 * base


def test_column_exact_for_prisms():
    for sides in (4, 6, 8):
        spec = synth.ShapeSpec(synth.Prism(synth.regular_polygon(sides, 1.3), 2.0))
        scene = synth.render(spec, scale=40)
        estimate = estimate_volume(_scene_pair(scene), FoodParams("x", ShapeClass.COLUMN))
        assert estimate.volume == pytest.approx(scene.true_volume, rel=0.015)


def test_sphere_consistency_ellipsoid_vs_irregular():
    for radius_cm in (1.0, 1.5, 2.0):  # 40, 60, 80 px at this scale
        scene = synth.render(synth.ShapeSpec(synth.Sphere(radius_cm)), scale=40)
        pair = _scene_pair(scene)
        ell = estimate_volume(pair, FoodParams("x", ShapeClass.ELLIPSOID)).volume
        irr = estimate_volume(pair, FoodParams("x", ShapeClass.IRREGULAR)).volume
        assert abs(ell - irr) <= 0.01 * max(ell, irr)


def test_scale_invariance_double_resolution():
    volumes = []
    for scale in (40, 80):
        scene = synth.render(synth.ShapeSpec(synth.Sphere(1.5)), scale=scale)
        volumes.append(estimate_volume(_scene_pair(scene),
                                       FoodParams("x", ShapeClass.ELLIPSOID)).volume)
    assert abs(volumes[1] - volumes[0]) <= 0.02 * volumes[0]


def test_column_uses_occupied_rows_only():
    # padded side mask: empty rows above/below must not inflate the height
    mask = np.zeros((50, 30), bool)
    mask[10:40, 5:25] = True
    side = extract_profile(mask)
    top = extract_profile(np.ones((20, 20), bool))
    pair = ViewPair("x", top, side, ALPHA_T, ALPHA_S)
    estimate = estimate_volume(pair, FoodParams("x", ShapeClass.COLUMN))
    expected = (400 * 0.025 ** 2) * (30 * 0.025)
    assert estimate.volume == pytest.approx(expected, rel=1e-12)


def test_estimate_volume_rejects_mismatched_food():
    scene = synth.render(synth.ShapeSpec(synth.Sphere(1.0)), scale=40)
    pair = _scene_pair(scene, food="apple")
    with pytest.raises(ValueError, match="applied to"):
        estimate_volume(pair, FoodParams("banana", ShapeClass.ELLIPSOID))
