import json
from pathlib import Path

import numpy as np
import pytest

from plgkit.cli import main
from plgkit.imageio import load_config, read_instance_masks, write_yolo_labels
from plgkit.pipeline import PipelineStageError, pipeline_e2e
from plgkit.synth import ObjectSpec, SynthScenario, synth_generate


@pytest.fixture(scope="module")
def run_data(tmp_path_factory):
    """A small rendered scenario with keyframe-only detections on disk."""
    tmp = tmp_path_factory.mktemp("data")
    scenario = SynthScenario(
        seed=4, n_frames=8, width=240, height=180,
        objects=(ObjectSpec(center=(90, 90), radii=(26, 22), color=(110, 130, 90),
                            texture_noise=60.0),
                 ObjectSpec(center=(170, 70), radii=(22, 18), color=(60, 150, 70),
                            texture_noise=60.0)),
        camera_velocity=(3.0, 0.0),
    )
    result = synth_generate(scenario)
    result.write(tmp)
    kf_dir = tmp / "kf_dets"
    kf_dir.mkdir()
    for t in range(0, 8, 2):
        write_yolo_labels(kf_dir / f"{t:06d}.txt", result.detections[t], (240, 180))
    return tmp, kf_dir, result


class TestPipeline:
    def test_e2e_produces_run_layout(self, run_data, tmp_path):
        data, kf_dir, _ = run_data
        manifest = pipeline_e2e(data / "frames", kf_dir, tmp_path / "run",
                                load_config(None), gt_tracks_path=data / "gt_tracks.json")
        run = tmp_path / "run"
        for rel in ("frames", "labels", "tracks.json", "report.json", "manifest.json"):
            assert (run / rel).exists()
        assert manifest["report"]["mota"] >= 0.9
        assert set(manifest["files"]) == {
            str(p.relative_to(run)) for p in run.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }
        listed = [s["name"] for s in manifest["stages"]]
        assert listed == ["frames", "boxes", "track", "eval"]

    def test_stage_failure_names_stage_and_keeps_artifacts(self, run_data, tmp_path):
        data, _, _ = run_data
        bogus = tmp_path / "baddets"
        bogus.mkdir()
        (bogus / "000000.txt").write_text("not a label line\n")
        with pytest.raises(PipelineStageError, match="boxes"):
            pipeline_e2e(data / "frames", bogus, tmp_path / "run", load_config(None))
        # frames stage completed; its artifacts and the manifest survive
        assert any((tmp_path / "run" / "frames").iterdir())
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["failed_stage"] == "boxes"

    def test_refine_stage_runs_from_files(self, run_data, tmp_path):
        data, kf_dir, _ = run_data
        manifest = pipeline_e2e(data / "frames", kf_dir, tmp_path / "run",
                                load_config(None), masks_index=data / "masks" / "index.json")
        assert (tmp_path / "run" / "masks" / "index.json").exists()
        assert "refine" in [s["name"] for s in manifest["stages"]]


class TestCli:
    def test_synth_writes_ground_truth(self, tmp_path):
        out = tmp_path / "synthrun"
        assert main(["synth", "--out", str(out), "--n-frames", "4", "--n-objects", "2",
                     "--width", "200", "--height", "150", "--seed", "1"]) == 0
        assert (out / "gt_tracks.json").exists()
        assert len(list((out / "frames").glob("*.png"))) == 4

    def test_match_dumps_csv_and_homography(self, run_data, tmp_path):
        data, _, _ = run_data
        out = tmp_path / "matchout"
        assert main(["match", "--frames", str(data / "frames"), "--frame-a", "0",
                     "--frame-b", "1", "--out", str(out)]) == 0
        kp_csv = out / "keypoints_000000.csv"
        assert kp_csv.read_text().splitlines()[0] == "frame,x,y,response"
        matches = (out / "matches_000000_000001.csv").read_text().splitlines()
        assert matches[0] == "ia,ib,dist"
        assert len(matches) > 10
        h = np.loadtxt(out / "homography_000000_000001.txt")
        assert h.shape == (3, 3)

    def test_boxes_then_track_then_eval(self, run_data, tmp_path):
        data, kf_dir, _ = run_data
        labels = tmp_path / "labels"
        assert main(["boxes", "--frames", str(data / "frames"), "--dets", str(kf_dir),
                     "--skip", "2", "--tau", "0.5", "--out", str(labels)]) == 0
        assert (labels / "provenance.json").exists()
        assert len(list(labels.glob("*.txt"))) == 8

        tracks = tmp_path / "tracks.json"
        assert main(["track", "--tracker", "sfm", "--frames", str(data / "frames"),
                     "--dets", str(labels), "--out", str(tracks)]) == 0
        report = tmp_path / "report.json"
        csv = tmp_path / "rows.csv"
        assert main(["eval", "--gt", str(data / "gt_tracks.json"), "--hyp", str(tracks),
                     "--report", str(report), "--csv", str(csv)]) == 0
        rep = json.loads(report.read_text())
        assert rep["gt_ids"] == 2
        assert rep["mota"] >= 0.9
        assert len(csv.read_text().splitlines()) == 2

    def test_track_kalman(self, run_data, tmp_path):
        data, _, _ = run_data
        tracks = tmp_path / "ktracks.json"
        assert main(["track", "--tracker", "kalman", "--frames", str(data / "frames"),
                     "--dets", str(data / "labels"), "--out", str(tracks)]) == 0
        payload = json.loads(tracks.read_text())
        assert len(payload) == 2

    def test_refine_cli_roundtrip(self, run_data, tmp_path):
        data, _, _ = run_data
        out_index = tmp_path / "refined" / "index.json"
        assert main(["refine", "--method", "dilation", "--masks",
                     str(data / "masks" / "index.json"), "--images", str(data / "frames"),
                     "--out", str(out_index)]) == 0
        refined = read_instance_masks(out_index, out_index.parent)
        originals = read_instance_masks(data / "masks" / "index.json", data / "masks")
        assert len(refined) == len(originals)
        by_key = {(m.image_id, m.instance_id): m for m in refined}
        for m in originals:
            grown = by_key[(m.image_id, m.instance_id)]
            assert grown.mask.array.sum() >= m.mask.array.sum()

    def test_e2e_cli(self, run_data, tmp_path):
        data, kf_dir, _ = run_data
        out = tmp_path / "runcli"
        assert main(["e2e", "--frames", str(data / "frames"), "--dets", str(kf_dir),
                     "--gt", str(data / "gt_tracks.json"), "--out", str(out),
                     "--skip", "2"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["report"]["mota"] >= 0.9

    def test_overlay_renders_frames(self, run_data, tmp_path):
        data, _, _ = run_data
        out = tmp_path / "overlay"
        assert main(["overlay", "--frames", str(data / "frames"),
                     "--tracks", str(data / "gt_tracks.json"),
                     "--masks", str(data / "masks" / "index.json"),
                     "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 8
