"""Pseudo-label generation and tracking evaluation for fruit-detection video pipelines.

Turns sparse keyframe detections into dense per-frame box pseudo-labels via
feature-match geometry, refines coarse instance masks with three classical
methods (constrained dilation, superpixel voting, GrabCut), tracks instances
across frames, and scores trackers with CLEAR-style metrics plus
yield-estimation error.
"""

__version__ = "0.1.0"

from .boxes import BBox, Detection, iou
from .features import Keypoint, MatchPair, brute_force_match, describe, detect_keypoints
from .geometry import (
    FrameMatcher,
    Homography,
    NoConsensusError,
    RansacResult,
    dlt_homography,
    ransac_homography,
    verify_pair,
    warp_point,
)
from .imageio import (
    FrameSequence,
    InstanceMask,
    PixelImage,
    load_config,
    load_frame_dir,
    read_instance_masks,
    read_yolo_labels,
    write_instance_masks,
    write_yolo_labels,
)
from .motmetrics import MotReport, compute_mota, compute_motp, evaluate_tracks, match_frames, mt_ml_fm, yield_error
from .pseudolabels import (
    KeyframeSchedule,
    PseudoLabel,
    PseudoLabelSet,
    filter_confident,
    generate_pseudolabels,
    schedule_keyframes,
    transfer_bbox,
)
from .synth import ObjectSpec, OccluderSpec, SynthScenario, SynthResult, synth_generate
from .tracking import (
    Track,
    hungarian_assign,
    track_kalman_iou,
    track_sfm,
    tracks_from_json,
    tracks_to_json,
)

__all__ = [
    "BBox", "Detection", "FrameMatcher", "FrameSequence", "Homography", "InstanceMask",
    "Keypoint", "KeyframeSchedule", "MatchPair", "MotReport", "NoConsensusError",
    "ObjectSpec", "OccluderSpec", "PixelImage", "PseudoLabel", "PseudoLabelSet",
    "RansacResult", "SynthResult", "SynthScenario", "Track",
    "brute_force_match", "compute_mota", "compute_motp", "describe", "detect_keypoints",
    "dlt_homography", "evaluate_tracks", "filter_confident", "generate_pseudolabels",
    "hungarian_assign", "iou", "load_config", "load_frame_dir", "match_frames",
    "mt_ml_fm", "ransac_homography", "read_instance_masks", "read_yolo_labels",
    "schedule_keyframes", "synth_generate", "track_kalman_iou", "track_sfm",
    "tracks_from_json", "tracks_to_json", "transfer_bbox", "verify_pair", "warp_point",
    "write_instance_masks", "write_yolo_labels", "yield_error",
]
