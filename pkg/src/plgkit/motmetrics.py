"""Tracker scoring: CLEAR-style accuracy/precision plus yield-estimation error.

Per frame, ground-truth and hypothesis boxes are put in correspondence: pairs
matched in the previous frame persist while their IoU stays at or above the
gate, and the remainder is matched by minimum-cost assignment on 1 - IoU,
gated. From the resulting event log:

* MOTA = 1 - (FN + FP + IDsw) / GT_Dets, where GT_Dets counts ground-truth
  boxes over all frames; MOTA lives in (-inf, 1].
* MOTP is the mean IoU over matched pairs (higher is better).
* An ID switch is counted when a ground-truth track's matched hypothesis id
  differs from its most recent one; a fragmentation when its matched status
  goes matched -> unmatched -> matched.
* MT / ML count ground-truth tracks covered on >= 80% / <= 20% of their frames.
* Yield error compares distinct hypothesis ids against ground-truth instance
  count: 100 * |IDs - GT_IDs| / GT_IDs, to the nearest integer percent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .boxes import BBox, iou
from .tracking import Track, hungarian_assign

MT_COVERAGE = 0.8
ML_COVERAGE = 0.2

_INFEASIBLE = 1e6


@dataclass
class FrameMatches:
    """Correspondence outcome for one frame."""

    frame: int
    matches: list[tuple[int, int, float]]  # (gt_id, hyp_id, IoU)
    unmatched_gt: list[int]
    unmatched_hyp: list[int]
    switches: list[tuple[int, int, int]]  # (gt_id, previous_hyp_id, new_hyp_id)


def _boxes_by_frame(tracks: list[Track]) -> dict[int, dict[int, BBox]]:
    out: dict[int, dict[int, BBox]] = {}
    for t in tracks:
        for o in t.observations:
            frame = out.setdefault(o.frame, {})
            if t.id in frame:
                raise ValueError(f"track {t.id} reports frame {o.frame} twice")
            frame[t.id] = o.bbox
    return out


def match_frames(gt_tracks: list[Track], hyp_tracks: list[Track],
                 iou_gate: float = 0.5, continuity: bool = True) -> list[FrameMatches]:
    """Build the per-frame correspondence log between truth and hypotheses.

    With continuity enabled (the default), a pair matched in the previous frame
    stays matched while its IoU holds the gate; leftover boxes are assigned by
    Hungarian matching on 1 - IoU. Switch events compare each ground-truth
    track's new hypothesis against its most recent one, across gaps.
    """
    gt_frames = _boxes_by_frame(gt_tracks)
    hyp_frames = _boxes_by_frame(hyp_tracks)
    all_frames = sorted(set(gt_frames) | set(hyp_frames))

    log: list[FrameMatches] = []
    prev: dict[int, int] = {}       # matches in the previous frame
    last_hyp: dict[int, int] = {}   # most recent hypothesis per gt track
    for t in all_frames:
        gt_boxes = gt_frames.get(t, {})
        hyp_boxes = hyp_frames.get(t, {})
        matches: dict[int, int] = {}

        if continuity:
            for g, h in prev.items():
                if g in gt_boxes and h in hyp_boxes and h not in matches.values():
                    if iou(gt_boxes[g], hyp_boxes[h]) >= iou_gate:
                        matches[g] = h

        free_gt = sorted(g for g in gt_boxes if g not in matches)
        free_hyp = sorted(h for h in hyp_boxes if h not in matches.values())
        if free_gt and free_hyp:
            cost = np.full((len(free_gt), len(free_hyp)), _INFEASIBLE)
            for i, g in enumerate(free_gt):
                for j, h in enumerate(free_hyp):
                    overlap = iou(gt_boxes[g], hyp_boxes[h])
                    if overlap >= iou_gate:
                        cost[i, j] = 1.0 - overlap
            for i, j in hungarian_assign(cost):
                if cost[i, j] < _INFEASIBLE:
                    matches[free_gt[i]] = free_hyp[j]

        switches = []
        for g, h in sorted(matches.items()):
            if g in last_hyp and last_hyp[g] != h:
                switches.append((g, last_hyp[g], h))
            last_hyp[g] = h

        log.append(FrameMatches(
            frame=t,
            matches=[(g, h, iou(gt_boxes[g], hyp_boxes[h])) for g, h in sorted(matches.items())],
            unmatched_gt=sorted(g for g in gt_boxes if g not in matches),
            unmatched_hyp=sorted(h for h in hyp_boxes if h not in matches.values()),
            switches=switches,
        ))
        prev = matches
    return log


def compute_mota(fn: int, fp: int, id_sw: int, gt_dets: int) -> float:
    """1 - (FN + FP + IDsw) / GT_Dets; unbounded below, at most 1."""
    if gt_dets <= 0:
        raise ValueError(f"GT_Dets must be positive, got {gt_dets}")
    return 1.0 - (fn + fp + id_sw) / gt_dets


def compute_motp(log: list[FrameMatches]) -> float | None:
    """Mean IoU over all matched pairs; None when nothing was matched."""
    ious = [m[2] for fm in log for m in fm.matches]
    return float(np.mean(ious)) if ious else None


def mt_ml_fm(gt_tracks: list[Track], log: list[FrameMatches]) -> tuple[int, int, int]:
    """Mostly-tracked and mostly-lost counts plus fragmentations.

    Coverage is the fraction of a ground-truth track's own frames on which it
    was matched; MT needs >= 0.8 and ML <= 0.2. A fragmentation is one
    matched -> unmatched -> matched transition within the track's lifetime.
    """
    matched_by_frame = {fm.frame: {g for g, _, _ in fm.matches} for fm in log}
    mt = ml = fm_count = 0
    for track in gt_tracks:
        frames = [o.frame for o in track.observations]
        flags = [track.id in matched_by_frame.get(f, set()) for f in frames]
        coverage = sum(flags) / len(flags)
        if coverage >= MT_COVERAGE:
            mt += 1
        elif coverage <= ML_COVERAGE:
            ml += 1
        runs = sum(1 for i, f in enumerate(flags) if f and (i == 0 or not flags[i - 1]))
        fm_count += max(0, runs - 1)
    return mt, ml, fm_count


def yield_error(ids: int, gt_ids: int) -> int:
    """Relative count error 100 * |IDs - GT_IDs| / GT_IDs, nearest integer percent."""
    if gt_ids <= 0:
        raise ValueError(f"GT_IDs must be positive, got {gt_ids}")
    return int(100.0 * abs(ids - gt_ids) / gt_ids + 0.5)


@dataclass
class MotReport:
    """All tracker-evaluation aggregates for one sequence."""

    mota: float
    motp: float | None
    tp: int
    fp: int
    fn: int
    id_sw: int
    fm: int
    mt: int
    ml: int
    precision: float
    recall: float
    dets: int
    gt_dets: int
    ids: int
    gt_ids: int
    yield_err: int

    def __post_init__(self) -> None:
        if self.tp + self.fn != self.gt_dets:
            raise ValueError(f"TP+FN={self.tp + self.fn} must equal GT_Dets={self.gt_dets}")
        if self.tp + self.fp != self.dets:
            raise ValueError(f"TP+FP={self.tp + self.fp} must equal Dets={self.dets}")
        expected = compute_mota(self.fn, self.fp, self.id_sw, self.gt_dets)
        if abs(self.mota - expected) > 1e-12:
            raise ValueError(f"MOTA={self.mota} inconsistent with counts ({expected})")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MotReport":
        return cls(**d)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @staticmethod
    def csv_header() -> str:
        return "mota,motp,tp,fp,fn,id_sw,fm,mt,ml,precision,recall,dets,gt_dets,ids,gt_ids,yield_err"

    def to_csv_row(self) -> str:
        motp = "" if self.motp is None else f"{self.motp:.6f}"
        return (f"{self.mota:.6f},{motp},{self.tp},{self.fp},{self.fn},{self.id_sw},{self.fm},"
                f"{self.mt},{self.ml},{self.precision:.6f},{self.recall:.6f},{self.dets},"
                f"{self.gt_dets},{self.ids},{self.gt_ids},{self.yield_err}")


def evaluate_tracks(gt_tracks: list[Track], hyp_tracks: list[Track],
                    iou_gate: float = 0.5) -> MotReport:
    """Score hypothesis tracks against ground truth; all aggregates in one report."""
    log = match_frames(gt_tracks, hyp_tracks, iou_gate)
    tp = sum(len(fm.matches) for fm in log)
    fp = sum(len(fm.unmatched_hyp) for fm in log)
    fn = sum(len(fm.unmatched_gt) for fm in log)
    id_sw = sum(len(fm.switches) for fm in log)
    gt_dets = sum(len(t.observations) for t in gt_tracks)
    dets = sum(len(t.observations) for t in hyp_tracks)
    mt, ml, fm_count = mt_ml_fm(gt_tracks, log)
    return MotReport(
        mota=compute_mota(fn, fp, id_sw, gt_dets),
        motp=compute_motp(log),
        tp=tp, fp=fp, fn=fn, id_sw=id_sw, fm=fm_count, mt=mt, ml=ml,
        precision=tp / dets if dets else 0.0,
        recall=tp / gt_dets if gt_dets else 0.0,
        dets=dets, gt_dets=gt_dets,
        ids=len(hyp_tracks), gt_ids=len(gt_tracks),
        yield_err=yield_error(len(hyp_tracks), len(gt_tracks)),
    )
