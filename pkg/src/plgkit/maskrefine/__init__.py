"""Refinement of coarse instance masks with three external-information methods:

* constrained dilation toward the reference bounding box,
* superpixel coverage voting,
* GMM + graph-cut segmentation seeded from the mask.

The dilation refiner never leaves the reference box; the other two may, since
superpixels and the trimap band both extend past it.
"""
from .gmm import GmmModel, fit_gmm
from .grabcut import (
    BAND_ALPHA,
    PROB_BG,
    PROB_FG,
    SURE_BG,
    SURE_FG,
    build_bbox_trimap,
    build_trimap,
    grabcut_from_bbox,
    refine_grabcut,
    segment_trimap,
)
from .maxflow import FlowNetwork, max_flow_min_cut
from .morphology import DISK5, UNIT_DISK, StructuringElement, dilate, erode, refine_dilation
from .slic import refine_slic, rgb_to_lab, slic

__all__ = [
    "BAND_ALPHA", "DISK5", "UNIT_DISK",
    "PROB_BG", "PROB_FG", "SURE_BG", "SURE_FG",
    "FlowNetwork", "GmmModel", "StructuringElement",
    "build_bbox_trimap", "build_trimap", "dilate", "erode", "fit_gmm",
    "grabcut_from_bbox", "max_flow_min_cut", "refine_dilation", "refine_grabcut",
    "refine_slic", "rgb_to_lab", "segment_trimap", "slic",
]
