"""Corner detection, binary patch descriptors, and brute-force Hamming matching.

The detector is a Harris corner detector; descriptors are 256-bit strings of
pairwise intensity comparisons sampled on a fixed pattern inside a 33x33 patch.
Intensity comparisons are invariant to additive brightness changes, and the
sampling pattern is derived from a fixed seed, so identical inputs always give
byte-identical outputs. The stage is deliberately pluggable: anything that
yields keypoints plus fixed-length binary descriptors can be swapped in, and
the downstream homography verification removes residual mismatches.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imageio import PixelImage

log = logging.getLogger(__name__)

DESCRIPTOR_BITS = 256
PATCH_RADIUS = 16
PATTERN_SEED = 0

_HARRIS_K = 0.04
_HARRIS_SIGMA = 1.0  # sharp integration scale: dense corners on fine textures
_DESCRIBE_SIGMA = 2.0
_MIN_IMAGE_SIDE = 2 * PATCH_RADIUS + 1


@dataclass(frozen=True)
class Keypoint:
    """Subpixel corner location with detector response and detection scale."""

    x: float
    y: float
    response: float
    scale: float = _HARRIS_SIGMA


@dataclass(frozen=True)
class MatchPair:
    """Correspondence between descriptor idx_a in set A and idx_b in set B."""

    idx_a: int
    idx_b: int
    distance: float


def _as_gray(img) -> np.ndarray:
    a = np.asarray(getattr(img, "array", img), dtype=np.float32)
    if a.ndim == 3:
        a = a @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    if a.max() > 1.0:
        a = a / np.float32(255.0)
    return a


def detect_keypoints(img, max_n: int = 1000) -> list[Keypoint]:
    """Detect up to max_n Harris corners, strongest first.

    RGB input is converted to grayscale internally. Images smaller than the
    detector window yield an empty list with a warning. Output order is
    deterministic: response descending, then y, then x.
    """
    gray = _as_gray(img)
    h, w = gray.shape
    if h < _MIN_IMAGE_SIDE or w < _MIN_IMAGE_SIDE:
        log.warning("image %dx%d smaller than detector window, no keypoints", w, h)
        return []
    ix = np.gradient(gray, axis=1)
    iy = np.gradient(gray, axis=0)
    ixx = ndimage.gaussian_filter(ix * ix, _HARRIS_SIGMA, mode="nearest", truncate=2.0)
    iyy = ndimage.gaussian_filter(iy * iy, _HARRIS_SIGMA, mode="nearest", truncate=2.0)
    ixy = ndimage.gaussian_filter(ix * iy, _HARRIS_SIGMA, mode="nearest", truncate=2.0)
    resp = (ixx * iyy - ixy * ixy) - _HARRIS_K * (ixx + iyy) ** 2

    margin = 4
    local_max = ndimage.maximum_filter1d(resp, 3, axis=0, mode="nearest")
    local_max = ndimage.maximum_filter1d(local_max, 3, axis=1, mode="nearest")
    peaks = resp == local_max
    peaks &= resp > max(np.float32(1e-12), 0.01 * resp.max())
    peaks[:margin, :] = peaks[-margin:, :] = False
    peaks[:, :margin] = peaks[:, -margin:] = False
    ys, xs = np.nonzero(peaks)
    if ys.size == 0:
        return []

    responses = resp[ys, xs]
    order = np.lexsort((xs, ys, -responses))[:max_n]
    ys, xs, responses = ys[order], xs[order], responses[order]

    # quadratic subpixel refinement along each axis, offset clamped to +-0.5
    def _subpix(prev, here, nxt):
        prev, here, nxt = (v.astype(np.float64) for v in (prev, here, nxt))
        denom = prev - 2.0 * here + nxt
        off = np.where(np.abs(denom) > 1e-12, 0.5 * (prev - nxt) / np.where(denom == 0, 1, denom), 0.0)
        return np.clip(off, -0.5, 0.5)

    dx = _subpix(resp[ys, xs - 1], resp[ys, xs], resp[ys, xs + 1])
    dy = _subpix(resp[ys - 1, xs], resp[ys, xs], resp[ys + 1, xs])
    return [Keypoint(float(x + ox), float(y + oy), float(r))
            for x, y, ox, oy, r in zip(xs, ys, dx, dy, responses)]


@lru_cache(maxsize=8)
def _sampling_pattern(seed: int) -> np.ndarray:
    """(DESCRIPTOR_BITS, 4) int offsets (dy1, dx1, dy2, dx2) within the patch."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < DESCRIPTOR_BITS:
        cand = rng.normal(0.0, PATCH_RADIUS / 2.0, size=4)
        cand = np.clip(np.round(cand), -PATCH_RADIUS, PATCH_RADIUS).astype(np.int64)
        if cand[0] == cand[2] and cand[1] == cand[3]:
            continue
        pts.append(cand)
    return np.stack(pts)


def describe(img, keypoints: list[Keypoint], pattern_seed: int = PATTERN_SEED
             ) -> tuple[list[Keypoint], np.ndarray]:
    """Compute packed binary descriptors for keypoints far enough from the border.

    Returns the surviving keypoints and a (n, DESCRIPTOR_BITS/8) uint8 array;
    keypoints within PATCH_RADIUS of the border are dropped and the drop count
    logged. Bit k is set when the patch is darker at the pattern's first sample
    than at its second.
    """
    gray = _as_gray(img)
    h, w = gray.shape
    smooth = ndimage.gaussian_filter(gray, _DESCRIBE_SIGMA, mode="nearest")
    pattern = _sampling_pattern(pattern_seed)

    kept, centers = [], []
    for kp in keypoints:
        cx, cy = int(round(kp.x)), int(round(kp.y))
        if PATCH_RADIUS <= cx < w - PATCH_RADIUS and PATCH_RADIUS <= cy < h - PATCH_RADIUS:
            kept.append(kp)
            centers.append((cy, cx))
    if len(kept) < len(keypoints):
        log.info("dropped %d keypoints within %d px of the border",
                 len(keypoints) - len(kept), PATCH_RADIUS)
    if not kept:
        return [], np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8)

    c = np.asarray(centers)  # (n, 2) as (y, x)
    y1 = c[:, 0:1] + pattern[None, :, 0]
    x1 = c[:, 1:2] + pattern[None, :, 1]
    y2 = c[:, 0:1] + pattern[None, :, 2]
    x2 = c[:, 1:2] + pattern[None, :, 3]
    bits = smooth[y1, x1] < smooth[y2, x2]
    return kept, np.packbits(bits, axis=1)


def hamming_matrix(desc_a: np.ndarray, desc_b: np.ndarray) -> np.ndarray:
    """(na, nb) Hamming distances between packed descriptor sets."""
    if desc_a.shape[1] != desc_b.shape[1]:
        raise ValueError(f"descriptor lengths differ: {desc_a.shape[1]*8} vs {desc_b.shape[1]*8} bits")
    # fold bytes into 64-bit words so popcount touches 8x fewer elements
    if desc_a.shape[1] % 8 == 0:
        a = np.ascontiguousarray(desc_a).view(np.uint64)
        b = np.ascontiguousarray(desc_b).view(np.uint64)
    else:
        a, b = desc_a, desc_b
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.uint16)
    chunk = max(1, 2**23 // max(1, b.shape[0] * b.shape[1]))
    for i in range(0, a.shape[0], chunk):
        xor = a[i:i + chunk, None, :] ^ b[None, :, :]
        out[i:i + chunk] = np.bitwise_count(xor).sum(axis=2, dtype=np.uint16)
    return out


def brute_force_match(desc_a: np.ndarray, desc_b: np.ndarray, max_dist: int = 64) -> list[MatchPair]:
    """All-vs-all Hamming matching with mutual nearest-neighbour cross-check.

    A pair (i, j) is kept only when j is i's nearest descriptor in B, i is j's
    nearest in A, and their distance is at most max_dist.
    """
    if desc_a.shape[0] == 0 or desc_b.shape[0] == 0:
        return []
    d = hamming_matrix(desc_a, desc_b)
    best_b = d.argmin(axis=1)
    best_a = d.argmin(axis=0)
    matches = []
    for i, j in enumerate(best_b):
        dist = int(d[i, j])
        if best_a[j] == i and dist <= max_dist:
            matches.append(MatchPair(i, int(j), float(dist)))
    return matches


def write_keypoints_csv(path: str | Path, frame_index: int, keypoints: list[Keypoint]) -> None:
    lines = ["frame,x,y,response"]
    lines += [f"{frame_index},{kp.x:.3f},{kp.y:.3f},{kp.response:.6g}" for kp in keypoints]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_matches_csv(path: str | Path, matches: list[MatchPair]) -> None:
    lines = ["ia,ib,dist"]
    lines += [f"{m.idx_a},{m.idx_b},{m.distance:g}" for m in matches]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
