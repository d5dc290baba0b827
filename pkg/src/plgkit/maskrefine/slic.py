"""Superpixel segmentation by local k-means in colour-position space.

Pixels are clustered in 5-D (CIELAB colour + xy position) with the distance
D = sqrt(d_lab^2 + m^2 * (d_xy / S)^2), where S = sqrt(N / K) is the expected
segment side and m the compactness. Cluster seeds start on a regular grid,
nudged to the lowest-gradient position in their 3x3 neighbourhood, and each
seed only competes for pixels within a 2S window, which keeps segments local.
A final connectivity pass relabels stray fragments into their largest
neighbouring segment, so every output label is one 4-connected region.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

# sRGB -> CIELAB with D65 white point. Companding threshold/slope per the sRGB
# standard; white point normalization Xn, Yn, Zn = (0.95047, 1.0, 1.08883).
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert (H, W, 3) uint8 sRGB to float64 CIELAB (L in [0, 100])."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _WHITE_D65
    eps, kappa = 216.0 / 24389.0, 24389.0 / 27.0
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16.0) / 116.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _image_lab(image) -> np.ndarray:
    a = np.asarray(getattr(image, "array", image))
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    return rgb_to_lab(a)


def _seed_grid(h: int, w: int, k: int) -> np.ndarray:
    """Roughly k seed positions (y, x) on a regular grid matching the aspect."""
    ny = min(h, max(1, int(round(np.sqrt(k * h / w)))))
    nx = min(w, max(1, int(round(k / ny))))
    ys = (np.arange(ny) + 0.5) * h / ny
    xs = (np.arange(nx) + 0.5) * w / nx
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.c_[gy.ravel(), gx.ravel()].astype(np.int64)


def slic(image, k: int = 2000, m: float = 0.1, max_iter: int = 10) -> np.ndarray:
    """Segment an image into about k superpixels; returns an int label map.

    Raises ValueError when k exceeds the pixel count or is below 1.
    """
    lab = _image_lab(image)
    h, w = lab.shape[:2]
    n = h * w
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds pixel count {n}")
    if k == 1:
        return np.zeros((h, w), dtype=np.int64)

    s = np.sqrt(n / k)
    seeds = _seed_grid(h, w, k)

    # nudge each seed to the lowest-gradient spot in its 3x3 neighbourhood
    gy = np.diff(lab, axis=0, append=lab[-1:]) ** 2
    gx = np.diff(lab, axis=1, append=lab[:, -1:]) ** 2
    grad = gy.sum(axis=2) + gx.sum(axis=2)
    for i, (sy, sx) in enumerate(seeds):
        y0, y1 = max(0, sy - 1), min(h, sy + 2)
        x0, x1 = max(0, sx - 1), min(w, sx + 2)
        win = grad[y0:y1, x0:x1]
        dy, dx = np.unravel_index(np.argmin(win), win.shape)
        seeds[i] = (y0 + dy, x0 + dx)

    centers = np.empty((len(seeds), 5))
    centers[:, :3] = lab[seeds[:, 0], seeds[:, 1]]
    centers[:, 3] = seeds[:, 0]
    centers[:, 4] = seeds[:, 1]

    yy, xx = np.mgrid[0:h, 0:w]
    labels = np.zeros((h, w), dtype=np.int64)
    win = int(np.ceil(s))
    ratio2 = (m / s) ** 2
    for _ in range(max_iter):
        best = np.full((h, w), np.inf)
        for ci in range(len(centers)):
            cy, cx = centers[ci, 3], centers[ci, 4]
            y0, y1 = max(0, int(cy) - win), min(h, int(cy) + win + 1)
            x0, x1 = max(0, int(cx) - win), min(w, int(cx) + win + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            d_lab2 = ((lab[y0:y1, x0:x1] - centers[ci, :3]) ** 2).sum(axis=2)
            d_xy2 = (yy[y0:y1, x0:x1] - cy) ** 2 + (xx[y0:y1, x0:x1] - cx) ** 2
            d2 = d_lab2 + ratio2 * d_xy2
            closer = d2 < best[y0:y1, x0:x1]
            best[y0:y1, x0:x1][closer] = d2[closer]
            labels[y0:y1, x0:x1][closer] = ci
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers)).astype(np.float64)
        nonzero = counts > 0
        for dim, values in enumerate((lab[..., 0], lab[..., 1], lab[..., 2], yy, xx)):
            sums = np.bincount(flat, weights=values.ravel(), minlength=len(centers))
            centers[nonzero, dim] = sums[nonzero] / counts[nonzero]

    return _enforce_connectivity(labels)


def _merge_orphans_once(out: np.ndarray) -> bool:
    from .morphology import UNIT_DISK, dilate

    h, w = out.shape
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    sizes = np.bincount(out.ravel())
    slices = ndimage.find_objects(out + 1)
    changed = False
    for value, sl in enumerate(slices):
        if sl is None:
            continue
        # widen by one pixel so fragment rings stay inside the window
        ys = slice(max(0, sl[0].start - 1), min(h, sl[0].stop + 1))
        xs = slice(max(0, sl[1].start - 1), min(w, sl[1].stop + 1))
        window = out[ys, xs]
        region = window == value
        comp, ncomp = ndimage.label(region, structure=structure)
        if ncomp <= 1:
            continue
        comp_sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(comp_sizes)) + 1
        for c in range(1, ncomp + 1):
            if c == keep:
                continue
            frag = comp == c
            ring = dilate(frag, UNIT_DISK) & ~frag
            neighbours = np.unique(window[ring])
            neighbours = neighbours[neighbours != value]
            if neighbours.size == 0:
                continue
            target = neighbours[np.argmax(sizes[neighbours])]
            window[frag] = target
            sizes[target] += int(frag.sum())
            sizes[value] -= int(frag.sum())
            changed = True
    return changed


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Merge disconnected fragments into their largest adjacent segment.

    Merging can shuffle fragments between windows computed from stale bounding
    boxes, so the pass repeats until stable; every merge strictly reduces the
    global component count, which bounds the loop.
    """
    out = labels.copy()
    while _merge_orphans_once(out):
        pass
    _, compact = np.unique(out, return_inverse=True)
    return compact.reshape(out.shape)


def refine_slic(mask: np.ndarray, superpixels: np.ndarray,
                t_u: float = 0.70, t_l: float = 0.30) -> np.ndarray:
    """Vote each superpixel in or out of the mask by coverage.

    A superpixel covered by the mask for at least t_u of its area is added
    wholesale; one covered at most t_l is removed wholesale; in between, its
    pixels are left untouched.
    """
    m = np.asarray(mask)
    m = m if m.dtype == bool else m > 0
    if superpixels.shape != m.shape:
        raise ValueError(f"superpixel map {superpixels.shape} does not match mask {m.shape}")
    total = np.bincount(superpixels.ravel())
    covered = np.bincount(superpixels.ravel(), weights=m.ravel().astype(np.float64))
    coverage = covered / np.maximum(total, 1)
    cov_map = coverage[superpixels]
    return np.where(cov_map >= t_u, True, np.where(cov_map <= t_l, False, m))
