"""Deterministic ingestion and emission of frames, labels, masks, and run configuration.

On-disk formats:

* Frames: PNG or PPM stills named with zero-padded frame numbers (``f000017.png``).
* Detection labels: YOLO text files, one object per line,
  ``class cx cy w h [conf]`` with coordinates normalized to [0, 1],
  UTF-8, LF line endings.
* Instance masks: one binary PNG per instance plus a JSON index
  ``{"images": [{"id", "file", "width", "height"}],
  "instances": [{"image_id", "instance_id", "mask_file", "bbox": [x, y, w, h]}]}``.
* Run configuration: INI file; option ``key`` under section ``sec`` is addressed
  as ``sec.key`` (e.g. ``ransac.threshold_px``).

All readers and writers are pure functions of their inputs and safe to call
concurrently on distinct paths.
"""
from __future__ import annotations

import configparser
import json
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .boxes import BBox, Detection

log = logging.getLogger(__name__)

_FRAME_NUM = re.compile(r"(\d+)(?!.*\d)")


@dataclass
class PixelImage:
    """8-bit raster: grayscale ``(H, W)`` or RGB ``(H, W, 3)`` uint8 array."""

    array: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.array, dtype=np.uint8)
        if a.ndim == 3 and a.shape[2] == 1:
            a = a[:, :, 0]
        if a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
            raise ValueError(f"expected (H, W) or (H, W, 3) array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got shape {a.shape}")
        self.array = a

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.array.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        """Row-major byte buffer of length width*height*channels."""
        return self.array.tobytes()

    def to_gray(self) -> np.ndarray:
        """Grayscale float64 view in [0, 255] (ITU-R 601 luma for RGB)."""
        if self.channels == 1:
            return self.array.astype(np.float64)
        a = self.array.astype(np.float64)
        return 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]

    @classmethod
    def load(cls, path: str | Path) -> "PixelImage":
        try:
            with Image.open(path) as im:
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB")
                return cls(np.asarray(im))
        except (OSError, ValueError) as exc:
            raise OSError(f"cannot read image {path}: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(self.array).save(path)


@dataclass
class FrameSequence:
    """Ordered list of (frame_index, image_path) pairs with a frame rate."""

    frames: list[tuple[int, Path]]
    fps: Fraction = Fraction(10)

    def __post_init__(self) -> None:
        indices = [i for i, _ in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    def indices(self) -> list[int]:
        return [i for i, _ in self.frames]

    def path(self, frame_index: int) -> Path:
        by_index = dict(self.frames)
        try:
            return by_index[frame_index]
        except KeyError:
            raise KeyError(f"no frame with index {frame_index}") from None

    def load(self, frame_index: int) -> PixelImage:
        return PixelImage.load(self.path(frame_index))


def load_frame_dir(path: str | Path, pattern: str = "*.png", fps: Fraction = Fraction(10)) -> FrameSequence:
    """Build a FrameSequence from a directory of numbered image files.

    Frame indices are parsed from the last digit run in each filename stem;
    the result is sorted by index regardless of directory listing order.
    Gaps in the index sequence are allowed but logged.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"frame directory not found: {root}")
    frames = []
    for p in sorted(root.glob(pattern)):
        m = _FRAME_NUM.search(p.stem)
        if m is None:
            log.warning("skipping %s: no frame number in filename", p)
            continue
        frames.append((int(m.group(1)), p))
    if not frames:
        raise ValueError(f"no frames matching {pattern!r} in {root}")
    frames.sort(key=lambda t: t[0])
    seen: dict[int, Path] = {}
    for i, p in frames:
        if i in seen:
            raise ValueError(f"duplicate frame index {i}: {seen[i]} and {p}")
        seen[i] = p
    indices = [i for i, _ in frames]
    missing = sorted(set(range(indices[0], indices[-1] + 1)) - set(indices))
    if missing:
        log.warning("%d missing frame indices in %s (first: %s)", len(missing), root, missing[:5])
    return FrameSequence(frames, fps=fps)


def frame_loader(frames) -> tuple[list[int], "callable"]:
    """Adapt a FrameSequence, mapping, or plain sequence to (indices, loader)."""
    if isinstance(frames, FrameSequence):
        return frames.indices(), frames.load
    if isinstance(frames, dict):
        indices = sorted(frames)
        return indices, lambda i: frames[i]
    indices = list(range(len(frames)))
    return indices, lambda i: frames[i]


def read_yolo_labels(path: str | Path, image_size: tuple[int, int]) -> list[Detection]:
    """Read one YOLO label file into pixel-space detections.

    Parameters
    ----------
    path : file with lines ``class cx cy w h [conf]``, all of cx, cy, w, h in [0, 1].
    image_size : (width, height) of the labelled image, used to denormalize.

    The frame index is parsed from the filename; pixel boxes are clamped to
    the image. Malformed or out-of-range lines raise ValueError naming the line.
    """
    p = Path(path)
    width, height = image_size
    m = _FRAME_NUM.search(p.stem)
    frame_index = int(m.group(1)) if m else 0
    dets: list[Detection] = []
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read label file {p}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise ValueError(f"{p}:{lineno}: expected 5 or 6 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(v) for v in parts[1:5])
            conf = float(parts[5]) if len(parts) == 6 else 1.0
        except ValueError as exc:
            raise ValueError(f"{p}:{lineno}: non-numeric field ({exc})") from exc
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h), ("conf", conf)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{p}:{lineno}: {name}={v} outside [0, 1]")
        if w == 0 or h == 0:
            raise ValueError(f"{p}:{lineno}: zero-size box")
        box = BBox.from_center(cx * width, cy * height, w * width, h * height)
        box, _ = box.clamp(width, height)
        dets.append(Detection(frame_index, box, conf, class_id))
    return dets


def write_yolo_labels(path: str | Path, detections: list[Detection], image_size: tuple[int, int]) -> None:
    """Write detections as a YOLO label file (normalized, 6 decimal places)."""
    width, height = image_size
    lines = []
    for d in detections:
        b = d.bbox
        vals = (b.cx / width, b.cy / height, b.w / width, b.h / height)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"box {b} does not normalize into [0, 1] on a {width}x{height} image")
        lines.append(f"{d.class_id} " + " ".join(f"{v:.6f}" for v in vals) + f" {d.confidence:.6f}")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8", newline="\n")


@dataclass
class InstanceMask:
    """Binary mask (values 0/255) for one object instance, tied to a reference box."""

    image_id: str
    instance_id: int
    mask: PixelImage
    ref_bbox: BBox

    def __post_init__(self) -> None:
        if self.mask.channels != 1:
            raise ValueError("instance masks must be single-channel")
        a = self.mask.array
        if not np.all((a == 0) | (a == 255)):
            self.mask = PixelImage(np.where(a > 0, 255, 0).astype(np.uint8))

    def is_empty(self) -> bool:
        return not self.mask.array.any()


def write_instance_masks(masks: list[InstanceMask], index_path: str | Path, mask_dir: str | Path,
                         image_sizes: dict[str, tuple[int, int]] | None = None) -> None:
    """Write masks as per-instance PNGs plus a JSON index.

    ``image_sizes`` maps image_id -> (width, height); when omitted, sizes are
    taken from the masks themselves.
    """
    mask_dir = Path(mask_dir)
    mask_dir.mkdir(parents=True, exist_ok=True)
    sizes: dict[str, tuple[int, int]] = dict(image_sizes or {})
    instances = []
    for m in masks:
        if m.image_id in sizes:
            w, h = sizes[m.image_id]
            if (m.mask.width, m.mask.height) != (w, h):
                raise ValueError(
                    f"mask for image {m.image_id!r} is {m.mask.width}x{m.mask.height}, "
                    f"image is {w}x{h}")
        else:
            sizes[m.image_id] = (m.mask.width, m.mask.height)
        fname = f"{m.image_id}_{m.instance_id:04d}.png"
        m.mask.save(mask_dir / fname)
        entry = {
            "image_id": m.image_id,
            "instance_id": m.instance_id,
            "mask_file": fname,
            "bbox": [m.ref_bbox.x, m.ref_bbox.y, m.ref_bbox.w, m.ref_bbox.h],
        }
        if m.is_empty():
            entry["empty"] = True
        instances.append(entry)
    index = {
        "images": [{"id": iid, "file": f"{iid}.png", "width": w, "height": h}
                   for iid, (w, h) in sorted(sizes.items())],
        "instances": instances,
    }
    index_path = Path(index_path)
    index_path.parent.mkdir(parents=True, exist_ok=True)
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_instance_masks(index_path: str | Path, mask_dir: str | Path) -> list[InstanceMask]:
    """Read an instance-mask index and its PNGs; dimension mismatches are fatal."""
    index = json.loads(Path(index_path).read_text(encoding="utf-8"))
    sizes = {im["id"]: (im["width"], im["height"]) for im in index.get("images", [])}
    mask_dir = Path(mask_dir)
    out = []
    for inst in index["instances"]:
        img = PixelImage.load(mask_dir / inst["mask_file"])
        if img.channels != 1:
            img = PixelImage(np.where(img.to_gray() > 0, 255, 0).astype(np.uint8))
        iid = inst["image_id"]
        if iid in sizes and (img.width, img.height) != sizes[iid]:
            raise ValueError(
                f"mask {inst['mask_file']} is {img.width}x{img.height}, "
                f"image {iid!r} is {sizes[iid][0]}x{sizes[iid][1]}")
        x, y, w, h = inst["bbox"]
        out.append(InstanceMask(iid, inst["instance_id"], img, BBox(x, y, w, h)))
    return out


DEFAULT_CONFIG: dict[str, str] = {
    # feature detection / matching
    "features.max_keypoints": "1000",
    "features.max_hamming": "64",
    "features.seed": "0",
    # homography verification
    "ransac.threshold_px": "3.0",
    "ransac.max_iters": "2000",
    "ransac.seed": "0",
    # box pseudo-label generation
    "plg.skip": "2",
    "plg.tau": "0.5",
    "plg.min_features": "3",
    # mask refinement
    "slic.k": "2000",
    "slic.m": "0.1",
    "slic.tu": "0.70",
    "slic.tl": "0.30",
    "grabcut.alpha": "0.05",
    "grabcut.iters": "5",
    "grabcut.gamma": "50.0",
    # tracking
    "track.max_miss": "5",
    "track.n_init": "3",
    "track.v_min": "0.5",
    "track.iou_min": "0.3",
    # evaluation
    "eval.iou_gate": "0.5",
}


def load_config(path: str | Path | None) -> dict[str, str]:
    """Load an INI config as a flat ``section.key -> value`` dict over defaults."""
    cfg = dict(DEFAULT_CONFIG)
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    for section in parser.sections():
        for key, value in parser.items(section):
            cfg[f"{section}.{key}"] = value
    return cfg


def save_config(cfg: dict[str, str], path: str | Path) -> None:
    parser = configparser.ConfigParser()
    for dotted, value in sorted(cfg.items()):
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
