"""Box-initialized segmentation and mask post-processing."""

from .gmm import GmmModel, fit_gmm
from .grabcut import GrabCutResult, SegConfig, build_trimap, grabcut
from .mask_ops import (
    SilhouetteProfile,
    extract_profile,
    largest_component,
    load_mask_png,
    save_mask_png,
)
from .maxflow import MinCutResult, PixelGraph, grid_edges_8, min_cut

__all__ = [
    "GmmModel",
    "fit_gmm",
    "GrabCutResult",
    "SegConfig",
    "build_trimap",
    "grabcut",
    "SilhouetteProfile",
    "extract_profile",
    "largest_component",
    "load_mask_png",
    "save_mask_png",
    "MinCutResult",
    "PixelGraph",
    "grid_edges_8",
    "min_cut",
]
