"""Multi-object tracking of detections with two association strategies.

track_sfm follows verified feature matches: a detection joins the track whose
last box contains the largest fraction of matches landing inside it. It needs
frames, handles short occlusions by matching across the gap, and has no motion
model. track_kalman_iou is a SORT-style tracker: constant-velocity Kalman
prediction, Hungarian assignment on 1 - IoU, and an optional colour-histogram
gate standing in for a learned appearance embedding.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .boxes import BBox, Detection, iou
from .geometry import FrameMatcher, NoConsensusError

log = logging.getLogger(__name__)

ACTIVE = "active"
LOST = "lost"
TERMINATED = "terminated"

_INFEASIBLE = 1e6


@dataclass(frozen=True)
class TrackObservation:
    frame: int
    bbox: BBox
    source: str = "detected"  # detected | predicted


@dataclass
class Track:
    """One tracked instance: persistent id plus its per-frame boxes."""

    id: int
    observations: list[TrackObservation] = field(default_factory=list)
    state: str = ACTIVE
    miss_count: int = 0

    def add(self, frame: int, bbox: BBox, source: str = "detected") -> None:
        if self.observations and frame <= self.observations[-1].frame:
            raise ValueError(f"track {self.id}: frame {frame} not after {self.observations[-1].frame}")
        self.observations.append(TrackObservation(frame, bbox, source))

    @property
    def last(self) -> TrackObservation:
        return self.observations[-1]

    def n_detected(self) -> int:
        return sum(1 for o in self.observations if o.source == "detected")


def tracks_to_json(tracks: list[Track], path: str | Path) -> None:
    payload = [
        {"id": t.id,
         "obs": [{"frame": o.frame, "bbox": [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h],
                  "source": o.source} for o in t.observations]}
        for t in tracks
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def tracks_from_json(path: str | Path) -> list[Track]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    tracks = []
    for entry in payload:
        t = Track(id=int(entry["id"]), state=TERMINATED)
        for o in entry["obs"]:
            x, y, w, h = o["bbox"]
            t.add(int(o["frame"]), BBox(x, y, w, h), o.get("source", "detected"))
        tracks.append(t)
    return tracks


def hungarian_assign(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-total-cost assignment of a finite (possibly rectangular) matrix.

    Equivalent to a perfect matching on the square matrix padded with a large
    constant: min(rows, cols) pairs are returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    return list(zip(rows.tolist(), cols.tolist()))


def track_sfm(frames, detections: dict[int, list[Detection]],
              matcher: FrameMatcher | None = None, v_min: float = 0.5,
              max_miss: int = 5, **matcher_params) -> list[Track]:
    """Track by feature voting over verified matches.

    For each new frame, every active track computes the fraction of verified
    matches starting inside its last box that land inside each candidate box;
    pairs are assigned greedily by highest vote, gated at v_min. Unmatched
    detections spawn new tracks; tracks unmatched for more than max_miss
    frames terminate.
    """
    from .imageio import frame_loader

    indices, loader = frame_loader(frames)
    if matcher is None:
        matcher = FrameMatcher(loader, **matcher_params)

    tracks: list[Track] = []
    active: list[Track] = []
    next_id = 0

    for pos, t in enumerate(indices):
        dets = detections.get(t, [])
        if pos == 0:
            for det in dets:
                track = Track(next_id)
                next_id += 1
                track.add(t, det.bbox)
                tracks.append(track)
                active.append(track)
            continue

        votes: list[tuple[float, int, int]] = []  # (vote, track_pos, det_idx)
        for ti, track in enumerate(active):
            last = track.last
            try:
                pair = matcher.verify(last.frame, t)
            except NoConsensusError as exc:
                log.info("frames %d->%d: %s; track %d casts no votes", last.frame, t, exc, track.id)
                continue
            src, dst = pair.points_a, pair.points_b
            inside = ((src[:, 0] >= last.bbox.x) & (src[:, 0] < last.bbox.x2)
                      & (src[:, 1] >= last.bbox.y) & (src[:, 1] < last.bbox.y2))
            n_inside = int(inside.sum())
            if n_inside == 0:
                continue
            landed = dst[inside]
            for di, det in enumerate(dets):
                b = det.bbox
                hits = ((landed[:, 0] >= b.x) & (landed[:, 0] < b.x2)
                        & (landed[:, 1] >= b.y) & (landed[:, 1] < b.y2)).sum()
                vote = float(hits) / n_inside
                if vote >= v_min:
                    votes.append((vote, ti, di))

        votes.sort(key=lambda v: (-v[0], v[1], v[2]))
        used_tracks: set[int] = set()
        used_dets: set[int] = set()
        for vote, ti, di in votes:
            if ti in used_tracks or di in used_dets:
                continue
            used_tracks.add(ti)
            used_dets.add(di)
            active[ti].add(t, dets[di].bbox)
            active[ti].miss_count = 0
            active[ti].state = ACTIVE

        for ti, track in enumerate(active):
            if ti not in used_tracks:
                track.miss_count += 1
                track.state = LOST if track.miss_count <= max_miss else TERMINATED
        active = [tr for tr in active if tr.state != TERMINATED]

        for di, det in enumerate(dets):
            if di not in used_dets:
                track = Track(next_id)
                next_id += 1
                track.add(t, det.bbox)
                tracks.append(track)
                active.append(track)

    for track in tracks:
        if track.state != TERMINATED:
            track.state = TERMINATED
    return tracks


class KalmanBoxFilter:
    """Constant-velocity Kalman filter on (cx, cy, area, aspect) box state.

    The state vector is (cx, cy, s, r, vcx, vcy, vs): centre, area s, aspect
    ratio r (constant, no velocity), and their velocities. The covariance is
    kept symmetric positive definite via the Joseph-form update.
    """

    def __init__(self, bbox: BBox):
        self.mean = np.zeros(7)
        self.mean[:4] = self._to_z(bbox)
        self.covariance = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
        self._f = np.eye(7)
        self._f[0, 4] = self._f[1, 5] = self._f[2, 6] = 1.0
        self._h = np.zeros((4, 7))
        self._h[:4, :4] = np.eye(4)
        self._q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4])
        self._r = np.diag([1.0, 1.0, 10.0, 10.0])

    @staticmethod
    def _to_z(bbox: BBox) -> np.ndarray:
        return np.array([bbox.cx, bbox.cy, bbox.w * bbox.h, bbox.w / bbox.h])

    def _to_bbox(self) -> BBox:
        s = max(self.mean[2], 1e-6)
        r = max(self.mean[3], 1e-6)
        w = np.sqrt(s * r)
        h = s / w
        return BBox.from_center(float(self.mean[0]), float(self.mean[1]), float(w), float(h))

    def predict(self) -> BBox:
        # a negative predicted area cannot produce a box; freeze its velocity
        if self.mean[2] + self.mean[6] <= 0:
            self.mean[6] = 0.0
        self.mean = self._f @ self.mean
        self.covariance = self._f @ self.covariance @ self._f.T + self._q
        self.covariance = 0.5 * (self.covariance + self.covariance.T)
        return self._to_bbox()

    def update(self, bbox: BBox) -> BBox:
        z = self._to_z(bbox)
        s = self._h @ self.covariance @ self._h.T + self._r
        k = self.covariance @ self._h.T @ np.linalg.inv(s)
        self.mean = self.mean + k @ (z - self._h @ self.mean)
        self.mean[2] = max(self.mean[2], 1e-6)
        self.mean[3] = max(self.mean[3], 1e-6)
        ikh = np.eye(7) - k @ self._h
        self.covariance = ikh @ self.covariance @ ikh.T + k @ self._r @ k.T
        self.covariance = 0.5 * (self.covariance + self.covariance.T)
        return self._to_bbox()


def _colour_histogram(image, bbox: BBox, bins: int = 32) -> np.ndarray:
    a = np.asarray(getattr(image, "array", image))
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    h, w = a.shape[:2]
    y0, y1 = max(0, int(bbox.y)), min(h, max(int(bbox.y2), int(bbox.y) + 1))
    x0, x1 = max(0, int(bbox.x)), min(w, max(int(bbox.x2), int(bbox.x) + 1))
    crop = a[y0:y1, x0:x1].reshape(-1, 3)
    hist = np.concatenate([np.bincount(crop[:, c] >> 3, minlength=bins)[:bins] for c in range(3)])
    norm = np.linalg.norm(hist)
    return hist / norm if norm > 0 else hist.astype(np.float64)


def _cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    return float(1.0 - np.dot(u, v))


@dataclass
class _KalmanEntry:
    track: Track
    kf: KalmanBoxFilter
    hits: int = 1
    confirmed: bool = False
    histogram: np.ndarray | None = None
    predicted: BBox | None = None


def track_kalman_iou(detections: dict[int, list[Detection]], iou_min: float = 0.3,
                     max_miss: int = 5, n_init: int = 3, frames=None,
                     appearance_gate: float | None = None) -> list[Track]:
    """SORT-style tracking: Kalman prediction plus Hungarian IoU association.

    Tracks are tentative until n_init hits and dropped from the output if never
    confirmed; a track terminates after max_miss consecutive misses. With
    frames given and appearance_gate set, an association must also keep the
    cosine distance between colour histograms at or below the gate.
    """
    loader = None
    if frames is not None:
        from .imageio import frame_loader

        _, loader = frame_loader(frames)
    if appearance_gate is not None and loader is None:
        raise ValueError("appearance_gate needs frames to compute histograms")

    entries: list[_KalmanEntry] = []
    finished: list[Track] = []
    next_id = 0

    for t in sorted(detections):
        dets = detections[t]
        img = loader(t) if loader is not None else None
        for e in entries:
            e.predicted = e.kf.predict()

        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if entries and dets:
            cost = np.full((len(entries), len(dets)), _INFEASIBLE)
            for ei, e in enumerate(entries):
                for di, det in enumerate(dets):
                    overlap = iou(e.predicted, det.bbox)
                    if overlap < iou_min:
                        continue
                    if appearance_gate is not None and e.histogram is not None:
                        hist = _colour_histogram(img, det.bbox)
                        if _cosine_distance(e.histogram, hist) > appearance_gate:
                            continue
                    cost[ei, di] = 1.0 - overlap
            for ei, di in hungarian_assign(cost):
                if cost[ei, di] >= _INFEASIBLE:
                    continue
                e = entries[ei]
                e.kf.update(dets[di].bbox)
                e.track.add(t, dets[di].bbox)
                e.track.miss_count = 0
                e.track.state = ACTIVE
                e.hits += 1
                if e.hits >= n_init:
                    e.confirmed = True
                if appearance_gate is not None:
                    e.histogram = _colour_histogram(img, dets[di].bbox)
                matched_tracks.add(ei)
                matched_dets.add(di)

        survivors = []
        for ei, e in enumerate(entries):
            if ei in matched_tracks:
                survivors.append(e)
                continue
            e.track.miss_count += 1
            e.hits = 0
            if e.track.miss_count > max_miss:
                e.track.state = TERMINATED
                if e.confirmed:
                    finished.append(e.track)
            else:
                e.track.state = LOST
                survivors.append(e)
        entries = survivors

        for di, det in enumerate(dets):
            if di in matched_dets:
                continue
            track = Track(next_id)
            next_id += 1
            track.add(t, det.bbox)
            entry = _KalmanEntry(track, KalmanBoxFilter(det.bbox))
            entry.confirmed = n_init <= 1
            if appearance_gate is not None:
                entry.histogram = _colour_histogram(img, det.bbox)
            entries.append(entry)

    for e in entries:
        e.track.state = TERMINATED
        if e.confirmed:
            finished.append(e.track)
    finished.sort(key=lambda tr: tr.id)
    return finished
