"""Dense box pseudo-labels from sparse keyframe detections.

Simulates a detector that only runs on every third frame of a pan, then fills
the in-between frames by carrying each box along its verified feature matches:
same size, re-centred on the matched features' centroid. Compares the
interpolated boxes against the generator's ground truth.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from plgkit.boxes import iou
from plgkit.pseudolabels import INTERPOLATED, KEYFRAME, generate_pseudolabels, schedule_keyframes
from plgkit.synth import ObjectSpec, SynthScenario, synth_generate

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

scenario = SynthScenario(
    seed=3, n_frames=12, width=320, height=200,
    objects=(
        ObjectSpec(center=(110, 80), radii=(34, 28), color=(110, 130, 90), texture_noise=60.0),
        ObjectSpec(center=(250, 120), radii=(28, 24), color=(60, 150, 70), texture_noise=60.0),
    ),
    camera_velocity=(4.0, 0.0),
)
result = synth_generate(scenario)

# keyframes every 3rd frame; the detector is "perfect" there (GT boxes)
skip = 3
schedule = schedule_keyframes(scenario.n_frames, skip)
keyframe_dets = {k: result.detections[k] for k in schedule.keyframes}
print(f"keyframes: {schedule.keyframes} ({100 // skip}% of frames detector-labelled)")

labels = generate_pseudolabels(result.frames, keyframe_dets, schedule, tau=0.5)
print(f"{labels.count(KEYFRAME)} keyframe boxes passed through, "
      f"{labels.count(INTERPOLATED)} interpolated, {len(labels.lost)} lost")

# score the interpolated boxes against ground truth
ious = []
for f in labels.frames():
    truth = {  # nearest GT by centre distance is unambiguous here
        i: d.bbox for i, d in enumerate(result.detections.get(f, []))
    }
    for pl in labels.per_frame[f]:
        if pl.provenance != INTERPOLATED or not truth:
            continue
        best = max(truth.values(), key=lambda b: iou(pl.detection.bbox, b))
        ious.append(iou(pl.detection.bbox, best))
print(f"interpolated boxes vs ground truth: mean IoU {np.mean(ious):.3f}, "
      f"min {np.min(ious):.3f}")

# visual check on one in-between frame
frame = 4  # between keyframes 3 and 6
fig, ax = plt.subplots(figsize=(7, 5))
ax.imshow(result.frames[frame].array)
for d in result.detections[frame]:
    b = d.bbox
    ax.add_patch(plt.Rectangle((b.x, b.y), b.w, b.h, fill=False, color="lime", lw=2))
for pl in labels.per_frame[frame]:
    b = pl.detection.bbox
    ax.add_patch(plt.Rectangle((b.x, b.y), b.w, b.h, fill=False, color="red", lw=1.5,
                               linestyle="--"))
ax.set_title(f"frame {frame}: ground truth (green) vs interpolated pseudo-labels (red)")
ax.axis("off")
fig.tight_layout()
fig.savefig(OUT / "02_pseudolabels_frame4.png", dpi=110)
print(f"wrote {OUT / '02_pseudolabels_frame4.png'}")
