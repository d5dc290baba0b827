"""Axis-aligned bounding boxes and detections, the pixel-space currency of the toolkit."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner (x, y) plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"BBox needs positive size, got w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x2 and self.y <= py < self.y2

    def area(self) -> float:
        return self.w * self.h

    def clamp(self, width: int, height: int) -> tuple["BBox", bool]:
        """Fit the box to an image of the given size.

        If the box fits, it is shifted inside without resizing; otherwise it is
        cropped to the image. Returns the adjusted box and a flag that is True
        when cropping changed the size.
        """
        if not (self.x < width and self.y < height and self.x2 > 0 and self.y2 > 0):
            raise ValueError("box does not intersect the image")
        w, h = self.w, self.h
        truncated = False
        if w > width:
            w, truncated = float(width), True
        if h > height:
            h, truncated = float(height), True
        x = min(max(self.x, 0.0), width - w)
        y = min(max(self.y, 0.0), height - h)
        return BBox(x, y, w, h), truncated


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area() + b.area() - inter)


@dataclass(frozen=True)
class Detection:
    """One detector output: a box on a frame with a confidence score."""

    frame_index: int
    bbox: BBox
    confidence: float = 1.0
    class_id: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
