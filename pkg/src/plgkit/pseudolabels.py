"""Dense per-frame box pseudo-labels from sparse keyframe detections.

Detections are trusted on equally spaced keyframes. For every in-between frame,
each confident keyframe box is carried over using verified feature matches: the
new box keeps the original size and is re-centred on the centroid of the
matched feature positions in the target frame. Boxes with too few supporting
matches are reported lost rather than guessed.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox, Detection
from .geometry import FrameMatcher, NoConsensusError
from .imageio import PixelImage, frame_loader, write_yolo_labels

log = logging.getLogger(__name__)

DEFAULT_SKIP = 2
DEFAULT_MIN_FEATURES = 3

KEYFRAME = "keyframe_detection"
INTERPOLATED = "interpolated"


@dataclass(frozen=True)
class KeyframeSchedule:
    """Keyframes at every skip-th frame, always starting at frame 0."""

    n_frames: int
    skip: int

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.skip < 1:
            raise ValueError(f"skip must be >= 1, got {self.skip}")

    @property
    def keyframes(self) -> list[int]:
        return list(range(0, self.n_frames, self.skip))

    def is_keyframe(self, frame: int) -> bool:
        return 0 <= frame < self.n_frames and frame % self.skip == 0

    def source_keyframe(self, frame: int) -> int:
        """The keyframe whose detections label this frame."""
        return (frame // self.skip) * self.skip


def schedule_keyframes(n_frames: int, skip: int) -> KeyframeSchedule:
    return KeyframeSchedule(n_frames, skip)


def filter_confident(detections: list[Detection], tau: float) -> list[Detection]:
    """Detections with confidence >= tau, order preserved."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [d for d in detections if d.confidence >= tau]


@dataclass(frozen=True)
class TransferredBox:
    bbox: BBox
    n_features: int
    truncated: bool = False


def transfer_bbox(box: BBox, points_src: np.ndarray, points_dst: np.ndarray,
                  image_size: tuple[int, int] | None = None,
                  min_features: int = DEFAULT_MIN_FEATURES) -> TransferredBox | None:
    """Carry a box across a verified frame pair.

    points_src/points_dst are matched feature positions in the source and
    target frames. Only matches whose source endpoint lies inside the box
    contribute; with fewer than min_features of them the box is lost (None).
    The output keeps the source box's size and is centred on the mean of the
    contributing target positions, then clamped to the image when a size is
    given.
    """
    points_src = np.asarray(points_src, dtype=np.float64).reshape(-1, 2)
    points_dst = np.asarray(points_dst, dtype=np.float64).reshape(-1, 2)
    inside = ((points_src[:, 0] >= box.x) & (points_src[:, 0] < box.x2)
              & (points_src[:, 1] >= box.y) & (points_src[:, 1] < box.y2))
    n = int(inside.sum())
    if n < min_features:
        return None
    cx, cy = points_dst[inside].mean(axis=0)
    moved = BBox.from_center(float(cx), float(cy), box.w, box.h)
    truncated = False
    if image_size is not None:
        try:
            moved, truncated = moved.clamp(*image_size)
        except ValueError:
            return None  # centroid left the image entirely
    return TransferredBox(moved, n, truncated)


@dataclass(frozen=True)
class PseudoLabel:
    detection: Detection
    provenance: str  # KEYFRAME or INTERPOLATED
    source_keyframe: int
    source_index: int
    truncated: bool = False


@dataclass
class PseudoLabelSet:
    """Per-frame pseudo-labels with provenance back to keyframe detections."""

    per_frame: dict[int, list[PseudoLabel]] = field(default_factory=dict)
    lost: list[tuple[int, int, int]] = field(default_factory=list)  # (frame, source_kf, source_idx)

    def add(self, label: PseudoLabel) -> None:
        self.per_frame.setdefault(label.detection.frame_index, []).append(label)

    def detections(self, frame: int) -> list[Detection]:
        return [pl.detection for pl in self.per_frame.get(frame, [])]

    def frames(self) -> list[int]:
        return sorted(self.per_frame)

    def count(self, provenance: str | None = None) -> int:
        labels = (pl for pls in self.per_frame.values() for pl in pls)
        return sum(1 for pl in labels if provenance is None or pl.provenance == provenance)

    def write(self, out_dir: str | Path, image_size: tuple[int, int]) -> None:
        """Emit YOLO label files plus a JSON provenance sidecar."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        sidecar = {"frames": {}, "lost": [list(t) for t in self.lost]}
        for frame in self.frames():
            labels = self.per_frame[frame]
            write_yolo_labels(out / f"{frame:06d}.txt", [pl.detection for pl in labels], image_size)
            sidecar["frames"][str(frame)] = [
                {"provenance": pl.provenance, "source_keyframe": pl.source_keyframe,
                 "source_index": pl.source_index, "truncated": pl.truncated}
                for pl in labels
            ]
        (out / "provenance.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")


def _nms_duplicates(labels: list[PseudoLabel], iou_gate: float) -> list[PseudoLabel]:
    from .boxes import iou as box_iou

    kept: list[PseudoLabel] = []
    # keyframe detections take priority over interpolations
    for pl in sorted(labels, key=lambda p: (p.provenance != KEYFRAME, -p.detection.confidence)):
        if all(box_iou(pl.detection.bbox, q.detection.bbox) <= iou_gate for q in kept):
            kept.append(pl)
    return kept


def generate_pseudolabels(frames, keyframe_detections: dict[int, list[Detection]],
                          schedule: KeyframeSchedule, tau: float = 0.5,
                          min_features: int = DEFAULT_MIN_FEATURES,
                          matcher: FrameMatcher | None = None,
                          ransac_per_box: bool = False,
                          dedup_iou: float | None = None,
                          **matcher_params) -> PseudoLabelSet:
    """Generate pseudo-labels for every frame covered by the schedule.

    frames may be a FrameSequence, a mapping frame_index -> image, or a plain
    sequence of images. Keyframe detections pass through unmodified; in-between
    frames receive boxes transferred from the preceding keyframe via verified
    matches. A frame pair without geometric consensus skips its interpolations
    (logged, never fatal). With ransac_per_box, verification is re-run on the
    proposals inside each box instead of the full-frame inlier set. dedup_iou,
    when set, suppresses near-duplicate boxes per frame above that IoU.
    """
    indices, loader = frame_loader(frames)
    index_set = set(indices)
    if matcher is None:
        matcher = FrameMatcher(loader, **matcher_params)

    first = PixelImage(loader(indices[0]).array) if indices else None
    image_size = (first.width, first.height) if first is not None else None

    out = PseudoLabelSet()
    for k in schedule.keyframes:
        if k not in index_set:
            continue
        confident = filter_confident(keyframe_detections.get(k, []), tau)
        for i, det in enumerate(confident):
            out.add(PseudoLabel(det, KEYFRAME, k, i))
        if not confident:
            continue
        targets = [t for t in range(k + 1, min(k + schedule.skip, schedule.n_frames))
                   if t in index_set and not schedule.is_keyframe(t)]
        for t in targets:
            try:
                pair = None if ransac_per_box else matcher.verify(k, t)
            except NoConsensusError as exc:
                log.warning("frames %d->%d: %s; skipping interpolation", k, t, exc)
                continue
            for i, det in enumerate(confident):
                if ransac_per_box:
                    try:
                        local = matcher.verify_in_box(k, t, det.bbox)
                    except NoConsensusError:
                        out.lost.append((t, k, i))
                        continue
                    points_a, points_b = local.points_a, local.points_b
                else:
                    points_a, points_b = pair.points_a, pair.points_b
                res = transfer_bbox(det.bbox, points_a, points_b, image_size, min_features)
                if res is None:
                    out.lost.append((t, k, i))
                    continue
                out.add(PseudoLabel(Detection(t, res.bbox, det.confidence, det.class_id),
                                    INTERPOLATED, k, i, truncated=res.truncated))
    if dedup_iou is not None:
        for frame, labels in out.per_frame.items():
            out.per_frame[frame] = _nms_duplicates(labels, dedup_iou)
    return out
