"""foodcal: food volume, mass and calorie estimation from top/side image pairs.

A coin of known diameter calibrates pixels to centimeters in each view;
box-initialized segmentation extracts each food's silhouette; shape-class
formulas turn the paired silhouettes into a volume that density and energy
tables convert to mass and calories.
"""

from . import calorimetry, dataset, evaluation, measurement, pipeline, synth
from .segmentation import SegConfig, grabcut

__all__ = [
    "calorimetry",
    "dataset",
    "evaluation",
    "measurement",
    "pipeline",
    "synth",
    "SegConfig",
    "grabcut",
]

__version__ = "0.1.0"
