"""plg: command-line entry point wiring the toolkit into pipelines.

Subcommands: synth, match, boxes, refine, track, eval, e2e, overlay.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

log = logging.getLogger("plg")


def _common_flags(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="override configured seeds")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes where supported")
    parser.add_argument("--out", type=Path, required=out_required, default=None,
                        help="output directory or file")


def _config_from_args(args) -> dict[str, str]:
    from .imageio import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["ransac.seed"] = str(args.seed)
        cfg["features.seed"] = str(args.seed)
        cfg["synth.seed"] = str(args.seed)
    return cfg


def cmd_synth(args) -> int:
    from .synth import ObjectSpec, SynthScenario, synth_generate

    cfg = _config_from_args(args)
    seed = int(cfg.get("synth.seed", args.seed if args.seed is not None else 0))
    rng = np.random.default_rng(seed)
    objects = []
    margin = 0.2
    for _ in range(args.n_objects):
        rx = int(rng.integers(args.width // 16, args.width // 8))
        ry = int(rng.integers(args.height // 12, args.height // 6))
        cx = float(rng.uniform(margin * args.width, (1 - margin) * args.width))
        cy = float(rng.uniform(margin * args.height, (1 - margin) * args.height))
        color = tuple(int(c) for c in rng.integers(40, 200, size=3))
        objects.append(ObjectSpec(center=(cx, cy), radii=(rx, ry), color=color))
    scenario = SynthScenario(
        seed=seed, n_frames=args.n_frames, width=args.width, height=args.height,
        objects=tuple(objects), camera_velocity=(args.camera_vx, args.camera_vy),
    )
    result = synth_generate(scenario)
    result.write(args.out)
    print(f"wrote {len(result.frames)} frames, {len(result.tracks)} ground-truth tracks to {args.out}")
    return 0


def cmd_match(args) -> int:
    from .features import write_keypoints_csv, write_matches_csv
    from .geometry import FrameMatcher, NoConsensusError
    from .imageio import load_frame_dir

    cfg = _config_from_args(args)
    seq = load_frame_dir(args.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    matcher = FrameMatcher(
        seq.load,
        max_keypoints=int(cfg["features.max_keypoints"]),
        max_hamming=int(cfg["features.max_hamming"]),
        threshold_px=float(cfg["ransac.threshold_px"]),
        max_iters=int(cfg["ransac.max_iters"]),
        seed=int(cfg["ransac.seed"]),
        pattern_seed=int(cfg["features.seed"]),
    )
    a, b = args.frame_a, args.frame_b
    kps_a, _ = matcher.features(a)
    kps_b, _ = matcher.features(b)
    write_keypoints_csv(out / f"keypoints_{a:06d}.csv", a, kps_a)
    write_keypoints_csv(out / f"keypoints_{b:06d}.csv", b, kps_b)
    proposals = matcher.proposals(a, b)
    write_matches_csv(out / f"proposals_{a:06d}_{b:06d}.csv", proposals)
    from .geometry import ransac_homography

    try:
        if len(proposals) < 4:
            raise NoConsensusError(f"only {len(proposals)} match proposals")
        result = ransac_homography(proposals, kps_a, kps_b,
                                   threshold_px=float(cfg["ransac.threshold_px"]),
                                   max_iters=int(cfg["ransac.max_iters"]),
                                   seed=int(cfg["ransac.seed"]))
    except NoConsensusError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    write_matches_csv(out / f"matches_{a:06d}_{b:06d}.csv", result.inliers)
    np.savetxt(out / f"homography_{a:06d}_{b:06d}.txt", result.model.matrix)
    print(f"{len(result.inliers)} verified matches of {len(proposals)} proposals "
          f"({result.inlier_ratio:.1%}) in {result.n_iterations} iterations")
    return 0


def cmd_boxes(args) -> int:
    from .imageio import PixelImage, load_frame_dir
    from .pipeline import _load_detections, _matcher_from_config
    from .pseudolabels import generate_pseudolabels, schedule_keyframes

    cfg = _config_from_args(args)
    if args.skip is not None:
        cfg["plg.skip"] = str(args.skip)
    if args.tau is not None:
        cfg["plg.tau"] = str(args.tau)
    seq = load_frame_dir(args.frames)
    first = PixelImage.load(seq.frames[0][1])
    size = (first.width, first.height)
    detections = _load_detections(Path(args.dets), size)
    schedule = schedule_keyframes(max(seq.indices()) + 1, int(cfg["plg.skip"]))
    labels = generate_pseudolabels(
        seq, detections, schedule,
        tau=float(cfg["plg.tau"]),
        min_features=int(cfg["plg.min_features"]),
        matcher=_matcher_from_config(seq.load, cfg),
        ransac_per_box=args.per_box_ransac,
        dedup_iou=args.dedup_iou,
    )
    labels.write(args.out, size)
    n_kf = labels.count("keyframe_detection")
    n_interp = labels.count("interpolated")
    print(f"wrote {n_kf} keyframe + {n_interp} interpolated boxes over "
          f"{len(labels.frames())} frames to {args.out}")
    return 0


def _refine_worker(task) -> tuple[str, int, np.ndarray]:
    image_path, mask_array, bbox_xywh, image_id, instance_id, method, cfg = task
    from .boxes import BBox
    from .imageio import PixelImage
    from .pipeline import refine_one

    image = PixelImage.load(image_path)
    out = refine_one(image, mask_array, BBox(*bbox_xywh), method, cfg)
    return image_id, instance_id, out


def cmd_refine(args) -> int:
    from .imageio import InstanceMask, PixelImage, load_frame_dir, read_instance_masks, write_instance_masks

    cfg = _config_from_args(args)
    masks = read_instance_masks(args.masks, Path(args.masks).parent)
    seq = load_frame_dir(args.images)
    by_id = {f"{i:06d}": p for i, p in seq.frames}
    tasks = []
    for m in masks:
        if m.image_id not in by_id:
            raise FileNotFoundError(f"no image for id {m.image_id!r} in {args.images}")
        tasks.append((by_id[m.image_id], m.mask.array,
                      (m.ref_bbox.x, m.ref_bbox.y, m.ref_bbox.w, m.ref_bbox.h),
                      m.image_id, m.instance_id, args.method, cfg))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_refine_worker, tasks))
    else:
        results = [_refine_worker(t) for t in tasks]
    out_dir = Path(args.out).parent
    refined = [InstanceMask(iid, inst, PixelImage(arr.astype(np.uint8) * 255),
                            next(m.ref_bbox for m in masks
                                 if m.image_id == iid and m.instance_id == inst))
               for iid, inst, arr in results]
    sizes = {}
    for m in refined:
        img = PixelImage.load(by_id[m.image_id])
        sizes[m.image_id] = (img.width, img.height)
    write_instance_masks(refined, args.out, out_dir, sizes)
    print(f"refined {len(refined)} masks with {args.method} -> {args.out}")
    return 0


def cmd_track(args) -> int:
    from .imageio import PixelImage, load_frame_dir
    from .pipeline import _load_detections, _matcher_from_config
    from .tracking import track_kalman_iou, track_sfm, tracks_to_json

    cfg = _config_from_args(args)
    seq = load_frame_dir(args.frames)
    first = PixelImage.load(seq.frames[0][1])
    detections = _load_detections(Path(args.dets), (first.width, first.height))
    if args.tracker == "sfm":
        tracks = track_sfm(seq, detections, matcher=_matcher_from_config(seq.load, cfg),
                           v_min=float(cfg["track.v_min"]), max_miss=int(cfg["track.max_miss"]))
    else:
        tracks = track_kalman_iou(
            detections, iou_min=float(cfg["track.iou_min"]),
            max_miss=int(cfg["track.max_miss"]), n_init=int(cfg["track.n_init"]),
            frames=seq if args.appearance_gate is not None else None,
            appearance_gate=args.appearance_gate)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    tracks_to_json(tracks, args.out)
    print(f"{len(tracks)} tracks -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .motmetrics import evaluate_tracks
    from .tracking import tracks_from_json

    gt = tracks_from_json(args.gt)
    hyp = tracks_from_json(args.hyp)
    report = evaluate_tracks(gt, hyp, iou_gate=args.iou_gate)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    report.write_json(args.report)
    if args.csv is not None:
        path = Path(args.csv)
        new = not path.exists()
        with open(path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(report.csv_header() + "\n")
            fh.write(report.to_csv_row() + "\n")
    motp = "n/a" if report.motp is None else f"{report.motp:.3f}"
    print(f"MOTA {report.mota:.3f}  MOTP {motp}  IDsw {report.id_sw}  FM {report.fm}  "
          f"MT {report.mt}  ML {report.ml}  IDs {report.ids}/{report.gt_ids}  "
          f"yield err {report.yield_err}%")
    return 0


def cmd_e2e(args) -> int:
    from .pipeline import pipeline_e2e

    cfg = _config_from_args(args)
    if args.skip is not None:
        cfg["plg.skip"] = str(args.skip)
    if args.tracker is not None:
        cfg["track.tracker"] = args.tracker
    manifest = pipeline_e2e(args.frames, args.dets, args.out, cfg,
                            gt_tracks_path=args.gt, masks_index=args.masks)
    stages = ", ".join(f"{s['name']} {s['seconds']:.2f}s" for s in manifest["stages"])
    print(f"run complete: {stages}")
    if "report" in manifest:
        print(f"MOTA {manifest['report']['mota']:.3f}  yield err {manifest['report']['yield_err']}%")
    return 0


_PALETTE = [
    (230, 60, 60), (60, 180, 75), (255, 200, 0), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (170, 220, 60), (250, 190, 190),
]


def _draw_box(arr: np.ndarray, bbox, color, thickness: int = 2) -> None:
    h, w = arr.shape[:2]
    x0, y0 = max(0, int(bbox.x)), max(0, int(bbox.y))
    x1, y1 = min(w, int(bbox.x2)), min(h, int(bbox.y2))
    t = thickness
    arr[y0:min(y0 + t, h), x0:x1] = color
    arr[max(y1 - t, 0):y1, x0:x1] = color
    arr[y0:y1, x0:min(x0 + t, w)] = color
    arr[y0:y1, max(x1 - t, 0):x1] = color


def cmd_overlay(args) -> int:
    from .imageio import PixelImage, load_frame_dir, read_instance_masks, read_yolo_labels
    from .tracking import tracks_from_json

    seq = load_frame_dir(args.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    boxes_by_frame: dict[int, list] = {}
    if args.labels is not None:
        first = PixelImage.load(seq.frames[0][1])
        for path in sorted(Path(args.labels).glob("*.txt")):
            for d in read_yolo_labels(path, (first.width, first.height)):
                boxes_by_frame.setdefault(d.frame_index, []).append((d.bbox, 0))
    if args.tracks is not None:
        for tr in tracks_from_json(args.tracks):
            for o in tr.observations:
                boxes_by_frame.setdefault(o.frame, []).append((o.bbox, tr.id))
    masks_by_frame: dict[int, list] = {}
    if args.masks is not None:
        for m in read_instance_masks(args.masks, Path(args.masks).parent):
            masks_by_frame.setdefault(int(m.image_id), []).append(m)

    for i, path in seq.frames:
        img = PixelImage.load(path)
        arr = img.array.copy()
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        for m in masks_by_frame.get(i, []):
            color = np.array(_PALETTE[m.instance_id % len(_PALETTE)])
            sel = m.mask.array > 0
            arr[sel] = (0.5 * arr[sel] + 0.5 * color).astype(np.uint8)
        for bbox, ident in boxes_by_frame.get(i, []):
            _draw_box(arr, bbox, _PALETTE[ident % len(_PALETTE)])
        PixelImage(arr).save(out / f"{i:06d}.png")
    print(f"wrote {len(seq)} overlay frames to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    _common_flags(p)
    p.add_argument("--n-frames", type=int, default=20)
    p.add_argument("--n-objects", type=int, default=3)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--camera-vx", type=float, default=3.0)
    p.add_argument("--camera-vy", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("match", help="match and verify one frame pair, dump CSVs")
    _common_flags(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--frame-a", type=int, required=True)
    p.add_argument("--frame-b", type=int, required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("boxes", help="generate box pseudo-labels from keyframe detections")
    _common_flags(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--dets", type=Path, required=True, help="YOLO labels for keyframes")
    p.add_argument("--skip", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--per-box-ransac", action="store_true")
    p.add_argument("--dedup-iou", type=float, default=None)
    p.set_defaults(func=cmd_boxes)

    p = sub.add_parser("refine", help="refine instance masks")
    _common_flags(p)
    p.add_argument("--method", choices=["dilation", "slic", "grabcut"], required=True)
    p.add_argument("--masks", type=Path, required=True, help="input mask index JSON")
    p.add_argument("--images", type=Path, required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("track", help="track detections across frames")
    _common_flags(p)
    p.add_argument("--tracker", choices=["sfm", "kalman"], required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--dets", type=Path, required=True)
    p.add_argument("--appearance-gate", type=float, default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    _common_flags(p, out_required=False)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--hyp", type=Path, required=True)
    p.add_argument("--iou-gate", type=float, default=0.5)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--csv", type=Path, default=None, help="append a CSV summary row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("e2e", help="full pipeline into a run directory")
    _common_flags(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--dets", type=Path, required=True)
    p.add_argument("--gt", type=Path, default=None)
    p.add_argument("--masks", type=Path, default=None)
    p.add_argument("--skip", type=int, default=None)
    p.add_argument("--tracker", choices=["sfm", "kalman"], default=None)
    p.set_defaults(func=cmd_e2e)

    p = sub.add_parser("overlay", help="render boxes and masks onto frames")
    _common_flags(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--labels", type=Path, default=None)
    p.add_argument("--tracks", type=Path, default=None)
    p.add_argument("--masks", type=Path, default=None)
    p.set_defaults(func=cmd_overlay)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
