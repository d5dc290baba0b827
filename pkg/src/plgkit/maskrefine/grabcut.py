"""Iterative mask refinement by GMM colour models and graph cuts.

The initial mask seeds a four-zone trimap: its erosion is sure foreground, the
rest of the mask probable foreground, a dilation band around it probable
background, and everything else sure background. Band depth is proportional to
the smaller reference-box dimension. Each iteration refits one colour GMM per
side on the current segmentation and solves a min-cut whose terminal links are
negative GMM log-likelihoods and whose neighbour links are contrast-weighted
(gamma * exp(-beta * ||z_p - z_q||^2), beta estimated from the image). Sure
pixels never flip.
"""
from __future__ import annotations

import logging

import numpy as np

from ..boxes import BBox
from .gmm import fit_gmm
from .maxflow import FlowNetwork, max_flow_min_cut
from .morphology import UNIT_DISK, dilate, erode

log = logging.getLogger(__name__)

SURE_BG = 0
SURE_FG = 1
PROB_BG = 2
PROB_FG = 3

BAND_ALPHA = 0.05
BAND_MAX_RADIUS = 15
GAMMA = 50.0
GMM_COMPONENTS = 5

_BIG = 1e9


def band_radius(ref_bbox: BBox, alpha: float = BAND_ALPHA) -> int:
    """Trimap band depth: alpha times the smaller box dimension, in [1, 15]."""
    return min(BAND_MAX_RADIUS, max(1, int(round(alpha * min(ref_bbox.w, ref_bbox.h)))))


def build_trimap(mask: np.ndarray, ref_bbox: BBox, alpha: float = BAND_ALPHA) -> np.ndarray:
    """Four-zone trimap from a mask: erosion core, mask, dilation band, rest."""
    m = np.asarray(mask)
    m = m if m.dtype == bool else m > 0
    r = band_radius(ref_bbox, alpha)
    sure_fg = erode(m, UNIT_DISK, r)
    band = dilate(m, UNIT_DISK, r) & ~m
    trimap = np.full(m.shape, SURE_BG, dtype=np.int8)
    trimap[band] = PROB_BG
    trimap[m] = PROB_FG
    trimap[sure_fg] = SURE_FG
    return trimap


def build_bbox_trimap(shape: tuple[int, int], ref_bbox: BBox,
                      alpha: float = BAND_ALPHA) -> np.ndarray:
    """Trimap from a box alone: eroded interior is probable foreground.

    Experimental surrogate for runs without any initial mask; there is no sure
    foreground, so the optimizer is free to empty the mask entirely.
    """
    h, w = shape
    box_mask = np.zeros((h, w), dtype=bool)
    y0, y1 = max(0, int(np.floor(ref_bbox.y))), min(h, int(np.ceil(ref_bbox.y2)))
    x0, x1 = max(0, int(np.floor(ref_bbox.x))), min(w, int(np.ceil(ref_bbox.x2)))
    box_mask[y0:y1, x0:x1] = True
    interior = erode(box_mask, UNIT_DISK, band_radius(ref_bbox, alpha))
    trimap = np.full((h, w), SURE_BG, dtype=np.int8)
    trimap[box_mask] = PROB_BG
    trimap[interior] = PROB_FG
    return trimap


def _neighbour_pairs(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat index pairs of 4-connected horizontal and vertical neighbours."""
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.c_[idx[:, :-1].ravel(), idx[:, 1:].ravel()]
    vert = np.c_[idx[:-1, :].ravel(), idx[1:, :].ravel()]
    pairs = np.vstack([horiz, vert])
    return pairs[:, 0], pairs[:, 1]


def _rgb_array(image) -> np.ndarray:
    a = np.asarray(getattr(image, "array", image))
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    return a.astype(np.float64)


def segment_trimap(image, trimap: np.ndarray, n_iters: int = 5, gamma: float = GAMMA,
                   n_components: int = GMM_COMPONENTS, seed: int = 0) -> np.ndarray:
    """Minimize the segmentation energy over the trimap's probable pixels.

    Returns the foreground mask: sure foreground plus the probable pixels the
    final cut placed on the source side.
    """
    img = _rgb_array(image)
    h, w = img.shape[:2]
    if trimap.shape != (h, w):
        raise ValueError(f"trimap {trimap.shape} does not match image {(h, w)}")
    z = img.reshape(-1, 3)
    tri = trimap.ravel()

    unknown = (tri == PROB_FG) | (tri == PROB_BG)
    n_unknown = int(unknown.sum())
    if n_unknown == 0:
        log.warning("degenerate trimap: no probable pixels, mask returned unchanged")
        return ((tri == SURE_FG) | (tri == PROB_FG)).reshape(h, w)
    gid = np.full(h * w, -1, dtype=np.int64)
    gid[unknown] = np.arange(n_unknown)

    pa, pb = _neighbour_pairs(h, w)
    d2 = ((z[pa] - z[pb]) ** 2).sum(axis=1)
    mean_d2 = d2.mean()
    beta = 0.0 if mean_d2 <= 0 else 1.0 / (2.0 * mean_d2)
    weight = gamma * np.exp(-beta * d2)

    both_unknown = unknown[pa] & unknown[pb]
    fg_pinned = (tri == SURE_FG)
    bg_pinned = (tri == SURE_BG)
    # edges between an unknown pixel and a pinned neighbour act on its t-links
    pin_a = unknown[pa] & ~unknown[pb]
    pin_b = unknown[pb] & ~unknown[pa]

    fg_now = tri == PROB_FG
    seed_seq = np.random.SeedSequence(seed)
    for iteration in range(n_iters):
        fg_samples = z[fg_pinned | (unknown & fg_now)]
        bg_samples = z[bg_pinned | (unknown & ~fg_now)]
        if len(fg_samples) == 0 or len(bg_samples) == 0:
            log.warning("one side ran out of samples at iteration %d, stopping", iteration)
            break
        rng_fg, rng_bg = (np.random.default_rng(s) for s in seed_seq.spawn(2))
        fg_gmm = fit_gmm(fg_samples, n_components, rng_fg)
        bg_gmm = fit_gmm(bg_samples, n_components, rng_bg)

        zu = z[unknown]
        cap_src = np.clip(-bg_gmm.log_pdf(zu), None, _BIG)  # cut if labelled BG
        cap_snk = np.clip(-fg_gmm.log_pdf(zu), None, _BIG)
        # a common per-pixel shift keeps capacities non-negative without
        # changing which labelling minimizes the energy
        shift = np.minimum(np.minimum(cap_src, cap_snk), 0.0)
        cap_src -= shift
        cap_snk -= shift

        net = FlowNetwork(n_unknown)
        for node in range(n_unknown):
            net.set_tlink(node, float(cap_src[node]), float(cap_snk[node]))
        for a, b, cap in zip(gid[pa[both_unknown]], gid[pb[both_unknown]], weight[both_unknown]):
            net.add_nlink(int(a), int(b), float(cap))
        for sel, unknown_end, pinned_end in ((pin_a, pa, pb), (pin_b, pb, pa)):
            for u, p, cap in zip(gid[unknown_end[sel]], pinned_end[sel], weight[sel]):
                if fg_pinned[p]:
                    net.set_tlink(int(u), float(cap), 0.0)
                elif bg_pinned[p]:
                    net.set_tlink(int(u), 0.0, float(cap))

        _, fg_side = max_flow_min_cut(net)
        new_fg = np.zeros(h * w, dtype=bool)
        new_fg[unknown] = fg_side
        if np.array_equal(new_fg, fg_now):
            fg_now = new_fg
            break
        fg_now = new_fg

    return (fg_pinned | fg_now).reshape(h, w)


def refine_grabcut(image, mask: np.ndarray, ref_bbox: BBox, alpha: float = BAND_ALPHA,
                   n_iters: int = 5, gamma: float = GAMMA,
                   n_components: int = GMM_COMPONENTS, seed: int = 0) -> np.ndarray:
    """Refine a coarse instance mask; may grow beyond ref_bbox via the band."""
    m = np.asarray(mask)
    m = m if m.dtype == bool else m > 0
    if not m.any():
        log.warning("refine_grabcut: empty mask returned unchanged")
        return m
    trimap = build_trimap(m, ref_bbox, alpha)
    if not np.any((trimap == PROB_FG) | (trimap == PROB_BG)):
        log.warning("degenerate trimap: no probable pixels, mask returned unchanged")
        return m
    return segment_trimap(image, trimap, n_iters, gamma, n_components, seed)


def grabcut_from_bbox(image, ref_bbox: BBox, alpha: float = BAND_ALPHA, n_iters: int = 5,
                      gamma: float = GAMMA, n_components: int = GMM_COMPONENTS,
                      seed: int = 0) -> np.ndarray:
    """Experimental: produce an initial mask from a reference box alone."""
    img = _rgb_array(image)
    trimap = build_bbox_trimap(img.shape[:2], ref_bbox, alpha)
    return segment_trimap(image, trimap, n_iters, gamma, n_components, seed)
