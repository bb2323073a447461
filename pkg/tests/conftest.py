import numpy as np
import pytest

from foodcal import synth
from foodcal.dataset import BoundingBox


@pytest.fixture(scope="session")
def sphere_scene():
    """Clean 1.5 cm sphere at 40 px/cm with its coin, on a 600x600 canvas."""
    return synth.render(synth.ShapeSpec(synth.Sphere(1.5)), scale=40, canvas=(600, 600))


def padded(box: BoundingBox, pad: int, shape) -> BoundingBox:
    h, w = shape[:2]
    return BoundingBox(
        max(0, box.x_min - pad), max(0, box.y_min - pad),
        min(w, box.x_max + pad), min(h, box.y_max + pad),
    )


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.logical_and(a, b).sum() / np.logical_or(a, b).sum())
