"""Binary morphology on boolean masks, plus bbox-constrained mask growing."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..boxes import BBox

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructuringElement:
    """Odd-sized, point-symmetric binary kernel with its centre set."""

    footprint: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.footprint, dtype=bool)
        if f.ndim != 2 or f.shape[0] % 2 == 0 or f.shape[1] % 2 == 0:
            raise ValueError(f"footprint must be odd-sized 2D, got shape {f.shape}")
        if not f[f.shape[0] // 2, f.shape[1] // 2]:
            raise ValueError("footprint centre must be set")
        if not np.array_equal(f, f[::-1, ::-1]):
            raise ValueError("footprint must be symmetric about its centre")
        f.flags.writeable = False
        object.__setattr__(self, "footprint", f)

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        """Discrete disk: offsets with dx^2 + dy^2 <= radius^2."""
        if radius < 1:
            raise ValueError(f"radius must be >= 1, got {radius}")
        yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
        return cls(yy * yy + xx * xx <= radius * radius)

    def offsets(self) -> np.ndarray:
        r_y, r_x = (s // 2 for s in self.footprint.shape)
        return np.argwhere(self.footprint) - np.array([r_y, r_x])


DISK5 = StructuringElement.disk(2)   # 5x5 circular kernel, 13 pixels
UNIT_DISK = StructuringElement.disk(1)


def _as_bool(mask: np.ndarray) -> np.ndarray:
    m = np.asarray(mask)
    return m if m.dtype == bool else m > 0


def _shift_or(mask: np.ndarray, offsets: np.ndarray, reduce_all: bool) -> np.ndarray:
    h, w = mask.shape
    r = int(np.abs(offsets).max())
    padded = np.pad(mask, r, constant_values=False)
    acc = None
    for dy, dx in offsets:
        view = padded[r + dy:r + dy + h, r + dx:r + dx + w]
        acc = view.copy() if acc is None else (acc & view if reduce_all else acc | view)
    return acc


def dilate(mask: np.ndarray, elem: StructuringElement = DISK5, iters: int = 1) -> np.ndarray:
    """Minkowski dilation, iterated. Outside the image counts as background."""
    out = _as_bool(mask)
    offsets = elem.offsets()
    for _ in range(iters):
        out = _shift_or(out, offsets, reduce_all=False)
    return out


def erode(mask: np.ndarray, elem: StructuringElement = DISK5, iters: int = 1) -> np.ndarray:
    """Minkowski erosion, iterated. Outside the image counts as background."""
    out = _as_bool(mask)
    offsets = elem.offsets()
    for _ in range(iters):
        out = _shift_or(out, offsets, reduce_all=True)
    return out


def _bbox_slices(box: BBox, shape: tuple[int, int]) -> tuple[slice, slice]:
    h, w = shape
    x0 = max(0, int(np.floor(box.x)))
    y0 = max(0, int(np.floor(box.y)))
    x1 = min(w, int(np.ceil(box.x2)))
    y1 = min(h, int(np.ceil(box.y2)))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} does not cover any pixel of a {w}x{h} image")
    return slice(y0, y1), slice(x0, x1)


def refine_dilation(mask: np.ndarray, ref_bbox: BBox,
                    elem: StructuringElement = DISK5) -> np.ndarray:
    """Grow the mask with the 5x5 circular kernel until it touches the box.

    Each step dilates and clips to ref_bbox; growth stops when the mask touches
    all four box sides or reaches a fixpoint. The result always lies inside
    ref_bbox and contains the input's intersection with it.
    """
    m = _as_bool(mask)
    ys, xs = _bbox_slices(ref_bbox, m.shape)
    region = np.zeros_like(m)
    region[ys, xs] = True
    current = m & region
    if not current.any():
        log.warning("refine_dilation: mask empty inside %s, returned unchanged", ref_bbox)
        return current

    def touches_all_sides(a: np.ndarray) -> bool:
        sub = a[ys, xs]
        return bool(sub[0, :].any() and sub[-1, :].any() and sub[:, 0].any() and sub[:, -1].any())

    max_steps = sum(m.shape)
    for _ in range(max_steps):
        if touches_all_sides(current):
            break
        grown = dilate(current, elem) & region
        if np.array_equal(grown, current):
            break
        current = grown
    return current
