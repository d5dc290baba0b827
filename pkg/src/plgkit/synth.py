"""Deterministic synthetic sequences with exact ground truth.

Scenes are textured ellipses ("bunches") over a textured background canvas. A
moving camera window pans across the canvas, objects may add their own linear
or sinusoidal motion, and occluder rectangles travel in image space on top of
everything. Every frame comes with ground-truth boxes, instance masks, tracks,
and recorded occlusion intervals, and identical seeds reproduce byte-identical
frames.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BBox, Detection
from .imageio import PixelImage, write_yolo_labels
from .tracking import Track, tracks_to_json

DEFAULT_MIN_VISIBILITY = 0.3


@dataclass(frozen=True)
class ObjectSpec:
    """Textured ellipse anchored in world coordinates."""

    center: tuple[float, float]
    radii: tuple[float, float]
    color: tuple[int, int, int]
    motion: str = "static"  # static | linear | sinusoidal
    velocity: tuple[float, float] = (0.0, 0.0)
    amplitude: tuple[float, float] = (0.0, 0.0)
    period: float = 20.0
    texture_noise: float = 30.0
    texture: str = "blocks"  # blocks (random cells) | checker (regular grid)

    def position(self, t: int) -> tuple[float, float]:
        x, y = self.center
        if self.motion == "linear":
            return x + self.velocity[0] * t, y + self.velocity[1] * t
        if self.motion == "sinusoidal":
            phase = 2.0 * np.pi * t / self.period
            return x + self.amplitude[0] * np.sin(phase), y + self.amplitude[1] * np.sin(phase)
        return x, y


@dataclass(frozen=True)
class OccluderSpec:
    """Flat rectangle moving in image coordinates, painted over the scene."""

    center: tuple[float, float]
    size: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    color: tuple[int, int, int] = (90, 90, 90)

    def position(self, t: int) -> tuple[float, float]:
        return self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t


@dataclass(frozen=True)
class SynthScenario:
    seed: int = 0
    n_frames: int = 10
    width: int = 320
    height: int = 240
    objects: tuple[ObjectSpec, ...] = ()
    occluders: tuple[OccluderSpec, ...] = ()
    camera_velocity: tuple[float, float] = (0.0, 0.0)
    background_cell: int = 4
    min_visibility: float = DEFAULT_MIN_VISIBILITY


@dataclass
class SynthResult:
    scenario: SynthScenario
    frames: list[PixelImage]
    detections: dict[int, list[Detection]]
    tracks: list[Track]
    masks: dict[int, dict[int, np.ndarray]]  # frame -> object index -> bool mask
    occlusions: list[tuple[int, int]]        # (object index, frame)

    def image_size(self) -> tuple[int, int]:
        return self.scenario.width, self.scenario.height

    def write(self, out_dir: str | Path) -> None:
        """Emit frames/, labels/ (YOLO), masks/, and gt_tracks.json."""
        out = Path(out_dir)
        (out / "frames").mkdir(parents=True, exist_ok=True)
        (out / "labels").mkdir(parents=True, exist_ok=True)
        size = self.image_size()
        for t, frame in enumerate(self.frames):
            frame.save(out / "frames" / f"{t:06d}.png")
            write_yolo_labels(out / "labels" / f"{t:06d}.txt", self.detections.get(t, []), size)
        tracks_to_json(self.tracks, out / "gt_tracks.json")
        from .imageio import InstanceMask, write_instance_masks

        mask_list = []
        for t in sorted(self.masks):
            for oi, m in sorted(self.masks[t].items()):
                box = _tight_bbox(m)
                if box is None:
                    continue
                mask_list.append(InstanceMask(f"{t:06d}", oi,
                                              PixelImage(m.astype(np.uint8) * 255), box))
        write_instance_masks(mask_list, out / "masks" / "index.json", out / "masks",
                             {f"{t:06d}": size for t in sorted(self.masks)})
        (out / "scenario.json").write_text(
            json.dumps({"seed": self.scenario.seed, "n_frames": self.scenario.n_frames,
                        "width": self.scenario.width, "height": self.scenario.height},
                       indent=2) + "\n", encoding="utf-8")


def _tight_bbox(mask: np.ndarray) -> BBox | None:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return BBox(float(xs.min()), float(ys.min()),
                float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1))


def _block_texture(rng: np.random.Generator, h: int, w: int, cell: int,
                   base: tuple[int, int, int], noise: float) -> np.ndarray:
    """Blocky random texture: strong corners for the feature detector."""
    ch = (h + cell - 1) // cell
    cw = (w + cell - 1) // cell
    cells = rng.uniform(-noise, noise, size=(ch, cw, 3))
    up = np.kron(cells, np.ones((cell, cell, 1)))[:h, :w]
    return np.clip(np.asarray(base, dtype=np.float64) + up, 0, 255).astype(np.uint8)


def _checker_texture(h: int, w: int, cell: int, base: tuple[int, int, int],
                     contrast: float) -> np.ndarray:
    """Regular checkerboard: corners on a grid symmetric about the centre."""
    yy, xx = np.mgrid[0:h, 0:w]
    parity = ((yy // cell + xx // cell) % 2).astype(np.float64) * 2.0 - 1.0
    out = np.asarray(base, dtype=np.float64) + parity[:, :, None] * contrast
    return np.clip(out, 0, 255).astype(np.uint8)


def synth_generate(scenario: SynthScenario) -> SynthResult:
    """Render a scenario and derive its exact ground truth.

    Raises ValueError when an object or occluder cannot fit inside the frame.
    """
    w, h = scenario.width, scenario.height
    for obj in scenario.objects:
        if 2 * obj.radii[0] + 1 > w or 2 * obj.radii[1] + 1 > h:
            raise ValueError(f"object radii {obj.radii} exceed frame {w}x{h}")
    for occ in scenario.occluders:
        if occ.size[0] > w or occ.size[1] > h:
            raise ValueError(f"occluder size {occ.size} exceeds frame {w}x{h}")

    rng = np.random.default_rng(scenario.seed)

    origins = [(int(round(scenario.camera_velocity[0] * t)),
                int(round(scenario.camera_velocity[1] * t)))
               for t in range(scenario.n_frames)]
    min_ox = min(o[0] for o in origins)
    max_ox = max(o[0] for o in origins)
    min_oy = min(o[1] for o in origins)
    max_oy = max(o[1] for o in origins)
    canvas = _block_texture(rng, max_oy - min_oy + h, max_ox - min_ox + w,
                            scenario.background_cell, (110, 95, 80), 45.0)

    # object textures are fixed in object coordinates so frames stay matchable
    obj_patches = []
    for obj in scenario.objects:
        rx, ry = int(round(obj.radii[0])), int(round(obj.radii[1]))
        yy, xx = np.mgrid[-ry:ry + 1, -rx:rx + 1]
        ellipse = (xx / max(rx, 1e-9)) ** 2 + (yy / max(ry, 1e-9)) ** 2 <= 1.0
        if obj.texture == "checker":
            patch = _checker_texture(2 * ry + 1, 2 * rx + 1, 3, obj.color, obj.texture_noise)
        else:
            patch = _block_texture(rng, 2 * ry + 1, 2 * rx + 1, 2, obj.color, obj.texture_noise)
        obj_patches.append((rx, ry, ellipse, patch))
    occ_patches = [
        _block_texture(rng, int(round(occ.size[1])), int(round(occ.size[0])), 3, occ.color, 10.0)
        for occ in scenario.occluders
    ]

    frames: list[PixelImage] = []
    detections: dict[int, list[Detection]] = {}
    masks: dict[int, dict[int, np.ndarray]] = {}
    occlusions: list[tuple[int, int]] = []
    track_obs: dict[int, list[tuple[int, BBox]]] = {i: [] for i in range(len(scenario.objects))}

    for t in range(scenario.n_frames):
        ox, oy = origins[t][0] - min_ox, origins[t][1] - min_oy
        frame = canvas[oy:oy + h, ox:ox + w].copy()

        object_masks: dict[int, np.ndarray] = {}
        for oi, obj in enumerate(scenario.objects):
            rx, ry, ellipse, patch = obj_patches[oi]
            wx, wy = obj.position(t)
            cx = int(round(wx)) - origins[t][0]
            cy = int(round(wy)) - origins[t][1]
            x0, y0 = cx - rx, cy - ry
            sx0, sy0 = max(0, -x0), max(0, -y0)
            dx0, dy0 = max(0, x0), max(0, y0)
            sx1 = ellipse.shape[1] - max(0, x0 + ellipse.shape[1] - w)
            sy1 = ellipse.shape[0] - max(0, y0 + ellipse.shape[0] - h)
            full = np.zeros((h, w), dtype=bool)
            if sx1 > sx0 and sy1 > sy0:
                sub = ellipse[sy0:sy1, sx0:sx1]
                frame[dy0:dy0 + sub.shape[0], dx0:dx0 + sub.shape[1]][sub] = \
                    patch[sy0:sy1, sx0:sx1][sub]
                full[dy0:dy0 + sub.shape[0], dx0:dx0 + sub.shape[1]] = sub
            object_masks[oi] = full

        occluded = np.zeros((h, w), dtype=bool)
        for qi, occ in enumerate(scenario.occluders):
            px, py = occ.position(t)
            patch = occ_patches[qi]
            x0 = int(round(px - patch.shape[1] / 2))
            y0 = int(round(py - patch.shape[0] / 2))
            sx0, sy0 = max(0, -x0), max(0, -y0)
            dx0, dy0 = max(0, x0), max(0, y0)
            sx1 = patch.shape[1] - max(0, x0 + patch.shape[1] - w)
            sy1 = patch.shape[0] - max(0, y0 + patch.shape[0] - h)
            if sx1 > sx0 and sy1 > sy0:
                frame[dy0:dy0 + (sy1 - sy0), dx0:dx0 + (sx1 - sx0)] = patch[sy0:sy1, sx0:sx1]
                occluded[dy0:dy0 + (sy1 - sy0), dx0:dx0 + (sx1 - sx0)] = True

        frames.append(PixelImage(frame))
        dets: list[Detection] = []
        frame_masks: dict[int, np.ndarray] = {}
        for oi, obj in enumerate(scenario.objects):
            rx, ry, ellipse, _ = obj_patches[oi]
            total = int(ellipse.sum())
            # later-painted objects cover earlier ones, like the occluders do
            hidden = occluded.copy()
            for oj in range(oi + 1, len(scenario.objects)):
                hidden |= object_masks[oj]
            visible_mask = object_masks[oi] & ~hidden
            visible = int(visible_mask.sum())
            present = object_masks[oi].any()
            if present and visible / total < scenario.min_visibility:
                occlusions.append((oi, t))
            if visible / total >= scenario.min_visibility:
                box = _tight_bbox(object_masks[oi])
                dets.append(Detection(t, box, 1.0, 0))
                track_obs[oi].append((t, box))
                frame_masks[oi] = visible_mask
        detections[t] = dets
        masks[t] = frame_masks

    tracks = []
    for oi in sorted(track_obs):
        if not track_obs[oi]:
            continue
        tr = Track(oi, state="terminated")
        for frame_idx, box in track_obs[oi]:
            tr.add(frame_idx, box)
        tracks.append(tr)

    return SynthResult(scenario, frames, detections, tracks, masks, occlusions)


def two_texture_image(seed: int = 0, size: tuple[int, int] = (96, 96),
                      radii: tuple[int, int] = (28, 24),
                      fg_color: tuple[int, int, int] = (60, 150, 70),
                      bg_color: tuple[int, int, int] = (120, 95, 70),
                      fg_noise: float = 12.0, bg_noise: float = 14.0,
                      ) -> tuple[PixelImage, np.ndarray, BBox]:
    """One textured ellipse on a textured background, with its exact mask and box.

    Convenience wrapper for segmentation experiments: returns (image, mask, box).
    The default noise amplitudes keep the two colour populations separable,
    which is the regime the mask refiners are built for.
    """
    w, h = size
    rng = np.random.default_rng(seed)
    img = _block_texture(rng, h, w, 3, bg_color, bg_noise)
    rx, ry = int(radii[0]), int(radii[1])
    yy, xx = np.mgrid[-ry:ry + 1, -rx:rx + 1]
    ellipse = (xx / rx) ** 2 + (yy / ry) ** 2 <= 1.0
    patch = _block_texture(rng, 2 * ry + 1, 2 * rx + 1, 2, fg_color, fg_noise)
    cy, cx = h // 2, w // 2
    mask = np.zeros((h, w), dtype=bool)
    mask[cy - ry:cy + ry + 1, cx - rx:cx + rx + 1] = ellipse
    img[cy - ry:cy + ry + 1, cx - rx:cx + rx + 1][ellipse] = patch[ellipse]
    return PixelImage(img), mask, _tight_bbox(mask)
