"""End-to-end runs over a self-contained run directory.

A run directory has a fixed layout: frames/, labels/, masks/, tracks.json,
report.json, and manifest.json. Every stage consumes and produces only files,
so any stage can be re-run standalone on a prior run directory. The manifest
records the configuration, its hash, per-stage timings, and a content hash for
every output file; reruns with the same seed and configuration reproduce the
same hashes.
"""
from __future__ import annotations

import hashlib
import json
import logging
import shutil
import time
from pathlib import Path

from . import __version__
from .geometry import FrameMatcher
from .imageio import (
    PixelImage,
    load_config,
    load_frame_dir,
    read_instance_masks,
    read_yolo_labels,
    write_instance_masks,
)
from .motmetrics import MotReport, evaluate_tracks
from .pseudolabels import generate_pseudolabels, schedule_keyframes
from .tracking import track_kalman_iou, track_sfm, tracks_from_json, tracks_to_json

log = logging.getLogger(__name__)


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; partial artifacts stay in the run directory."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(cfg: dict[str, str]) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def hash_run_dir(run_dir: str | Path) -> dict[str, str]:
    """Content hash of every file in the run directory except the manifest."""
    run = Path(run_dir)
    return {
        str(p.relative_to(run)): _sha256(p)
        for p in sorted(run.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }


def _matcher_from_config(loader, cfg: dict[str, str]) -> FrameMatcher:
    return FrameMatcher(
        loader,
        max_keypoints=int(cfg["features.max_keypoints"]),
        max_hamming=int(cfg["features.max_hamming"]),
        threshold_px=float(cfg["ransac.threshold_px"]),
        max_iters=int(cfg["ransac.max_iters"]),
        seed=int(cfg["ransac.seed"]),
        pattern_seed=int(cfg["features.seed"]),
    )


def _load_detections(dets_dir: Path, image_size: tuple[int, int]) -> dict[int, list]:
    out = {}
    for path in sorted(Path(dets_dir).glob("*.txt")):
        dets = read_yolo_labels(path, image_size)
        if dets:
            out[dets[0].frame_index] = dets
        else:
            import re

            m = re.search(r"(\d+)(?!.*\d)", path.stem)
            if m:
                out[int(m.group(1))] = []
    return out


def stage_boxes(run_dir: Path, dets_dir: Path, cfg: dict[str, str]) -> None:
    seq = load_frame_dir(run_dir / "frames")
    first = PixelImage.load(seq.frames[0][1])
    size = (first.width, first.height)
    detections = _load_detections(dets_dir, size)
    n_frames = max(seq.indices()) + 1
    schedule = schedule_keyframes(n_frames, int(cfg["plg.skip"]))
    matcher = _matcher_from_config(seq.load, cfg)
    labels = generate_pseudolabels(
        seq, detections, schedule,
        tau=float(cfg["plg.tau"]),
        min_features=int(cfg["plg.min_features"]),
        matcher=matcher,
    )
    labels.write(run_dir / "labels", size)


def refine_one(image: PixelImage, mask, ref_bbox, method: str, cfg: dict[str, str]):
    """Apply one refinement method to one instance mask (bool array in/out)."""
    from . import maskrefine as mr
    import numpy as np

    m = np.asarray(mask)
    m = m if m.dtype == bool else m > 0
    if method == "dilation":
        return mr.refine_dilation(m, ref_bbox)
    if method == "slic":
        labels = mr.slic(image, k=int(cfg["slic.k"]), m=float(cfg["slic.m"]))
        return mr.refine_slic(m, labels, t_u=float(cfg["slic.tu"]), t_l=float(cfg["slic.tl"]))
    if method == "grabcut":
        return mr.refine_grabcut(
            image, m, ref_bbox,
            alpha=float(cfg["grabcut.alpha"]),
            n_iters=int(cfg["grabcut.iters"]),
            gamma=float(cfg["grabcut.gamma"]),
        )
    raise ValueError(f"unknown refinement method {method!r}")


def stage_refine(run_dir: Path, masks_index: Path, masks_dir: Path, images_dir: Path,
                 cfg: dict[str, str], method: str | None = None) -> None:
    import numpy as np
    from .imageio import InstanceMask

    method = method or cfg.get("refine.method", "grabcut")
    masks = read_instance_masks(masks_index, masks_dir)
    seq = load_frame_dir(images_dir)
    by_id = {f"{i:06d}": p for i, p in seq.frames}
    refined = []
    sizes = {}
    for m in masks:
        image = PixelImage.load(by_id[m.image_id]) if m.image_id in by_id else None
        if image is None:
            raise FileNotFoundError(f"no image for id {m.image_id!r} in {images_dir}")
        out = refine_one(image, m.mask.array, m.ref_bbox, method, cfg)
        refined.append(InstanceMask(m.image_id, m.instance_id,
                                    PixelImage(out.astype(np.uint8) * 255), m.ref_bbox))
        sizes[m.image_id] = (image.width, image.height)
    write_instance_masks(refined, run_dir / "masks" / "index.json", run_dir / "masks", sizes)


def stage_track(run_dir: Path, cfg: dict[str, str], labels_dir: Path | None = None) -> None:
    seq = load_frame_dir(run_dir / "frames")
    first = PixelImage.load(seq.frames[0][1])
    size = (first.width, first.height)
    detections = _load_detections(labels_dir or run_dir / "labels", size)
    tracker = cfg.get("track.tracker", "sfm")
    if tracker == "sfm":
        matcher = _matcher_from_config(seq.load, cfg)
        tracks = track_sfm(seq, detections, matcher=matcher,
                           v_min=float(cfg["track.v_min"]),
                           max_miss=int(cfg["track.max_miss"]))
    elif tracker == "kalman":
        tracks = track_kalman_iou(detections,
                                  iou_min=float(cfg["track.iou_min"]),
                                  max_miss=int(cfg["track.max_miss"]),
                                  n_init=int(cfg["track.n_init"]))
    else:
        raise ValueError(f"unknown tracker {tracker!r}")
    tracks_to_json(tracks, run_dir / "tracks.json")


def stage_eval(run_dir: Path, gt_tracks_path: Path, cfg: dict[str, str]) -> MotReport:
    gt = tracks_from_json(gt_tracks_path)
    hyp = tracks_from_json(run_dir / "tracks.json")
    report = evaluate_tracks(gt, hyp, iou_gate=float(cfg["eval.iou_gate"]))
    report.write_json(run_dir / "report.json")
    return report


def pipeline_e2e(frames_dir: str | Path, dets_dir: str | Path, out_dir: str | Path,
                 config: dict[str, str] | None = None,
                 gt_tracks_path: str | Path | None = None,
                 masks_index: str | Path | None = None,
                 masks_dir: str | Path | None = None) -> dict:
    """Run boxes -> (optional refine) -> track -> eval over a fresh run directory.

    Returns the manifest. On stage failure, raises PipelineStageError after
    preserving partial artifacts and the manifest written so far.
    """
    cfg = dict(config) if config is not None else load_config(None)
    run = Path(out_dir)
    run.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "version": __version__,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "stages": [],
        "files": {},
    }

    def run_stage(name: str, fn, *args) -> object:
        start = time.perf_counter()
        try:
            result = fn(*args)
        except Exception as exc:
            manifest["failed_stage"] = name
            manifest["files"] = hash_run_dir(run)
            _write_manifest(run, manifest)
            raise PipelineStageError(name, exc) from exc
        manifest["stages"].append({"name": name, "seconds": round(time.perf_counter() - start, 4)})
        return result

    def copy_frames() -> None:
        dest = run / "frames"
        dest.mkdir(parents=True, exist_ok=True)
        seq = load_frame_dir(frames_dir)
        for _, path in seq.frames:
            shutil.copyfile(path, dest / path.name)

    run_stage("frames", copy_frames)
    run_stage("boxes", stage_boxes, run, Path(dets_dir), cfg)
    if masks_index is not None:
        run_stage("refine", stage_refine, run, Path(masks_index),
                  Path(masks_dir or Path(masks_index).parent), run / "frames", cfg)
    run_stage("track", stage_track, run, cfg)
    report = None
    if gt_tracks_path is not None:
        report = run_stage("eval", stage_eval, run, Path(gt_tracks_path), cfg)
    manifest["files"] = hash_run_dir(run)
    if report is not None:
        manifest["report"] = report.to_dict()
    _write_manifest(run, manifest)
    return manifest


def _write_manifest(run: Path, manifest: dict) -> None:
    (run / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
