import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plgkit.boxes import BBox, Detection
from plgkit.imageio import (
    DEFAULT_CONFIG,
    FrameSequence,
    InstanceMask,
    PixelImage,
    load_config,
    load_frame_dir,
    read_instance_masks,
    read_yolo_labels,
    save_config,
    write_instance_masks,
    write_yolo_labels,
)


def _write_frames(tmp_path, indices, size=(16, 16)):
    d = tmp_path / "frames"
    d.mkdir(exist_ok=True)
    for i in indices:
        PixelImage(np.full((size[1], size[0]), i % 256, dtype=np.uint8)).save(d / f"f{i:03d}.png")
    return d


class TestFrameDir:
    def test_enumerates_sorted(self, tmp_path):
        d = _write_frames(tmp_path, range(10))
        seq = load_frame_dir(d)
        assert seq.indices() == list(range(10))

    def test_gap_reported(self, tmp_path, caplog):
        d = _write_frames(tmp_path, [0, 2])
        with caplog.at_level("WARNING"):
            seq = load_frame_dir(d)
        assert seq.indices() == [0, 2]
        assert any("missing" in r.message for r in caplog.records)

    def test_empty_dir_fatal(self, tmp_path):
        d = tmp_path / "frames"
        d.mkdir()
        with pytest.raises(ValueError, match="no frames"):
            load_frame_dir(d)

    def test_listing_order_irrelevant(self, tmp_path):
        # zero-padding differs so lexicographic and numeric order disagree
        d = tmp_path / "frames"
        d.mkdir()
        for name, i in [("f10.png", 10), ("f2.png", 2), ("f001.png", 1)]:
            PixelImage(np.zeros((4, 4), dtype=np.uint8)).save(d / name)
        assert load_frame_dir(d).indices() == [1, 2, 10]

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            FrameSequence([(3, "a.png"), (3, "b.png")])

    def test_ppm_frames_supported(self, tmp_path):
        from PIL import Image

        d = tmp_path / "frames"
        d.mkdir()
        for i in range(2):
            arr = np.full((6, 8, 3), 10 * i, dtype=np.uint8)
            Image.fromarray(arr).save(d / f"f{i:03d}.ppm")
        seq = load_frame_dir(d, pattern="*.ppm")
        assert seq.indices() == [0, 1]
        img = seq.load(1)
        assert (img.width, img.height, img.channels) == (8, 6, 3)
        assert img.array[0, 0, 0] == 10


class TestYoloLabels:
    def test_full_image_box(self, tmp_path):
        p = tmp_path / "000000.txt"
        p.write_text("0 0.5 0.5 1.0 1.0\n")
        (det,) = read_yolo_labels(p, (100, 100))
        assert (det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h) == (0, 0, 100, 100)

    def test_centered_box_with_confidence(self, tmp_path):
        p = tmp_path / "000001.txt"
        p.write_text("0 0.25 0.25 0.5 0.5 0.9\n")
        (det,) = read_yolo_labels(p, (200, 200))
        assert (det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h) == (0, 0, 100, 100)
        assert det.confidence == pytest.approx(0.9)
        assert det.frame_index == 1

    def test_out_of_range_rejected(self, tmp_path):
        p = tmp_path / "000000.txt"
        p.write_text("0 1.5 0.5 0.1 0.1\n")
        with pytest.raises(ValueError, match="cx"):
            read_yolo_labels(p, (100, 100))

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "000000.txt"
        p.write_text("0 0.5 0.5 0.2 0.2\nbogus line\n")
        with pytest.raises(ValueError, match=":2"):
            read_yolo_labels(p, (100, 100))

    @given(st.lists(
        st.tuples(
            st.floats(0.2, 0.8), st.floats(0.2, 0.8),
            st.floats(0.05, 0.35), st.floats(0.05, 0.35),
            st.floats(0.0, 1.0),
        ),
        min_size=0, max_size=8,
    ))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_within_tolerance(self, tmp_path_factory, rows):
        tmp = tmp_path_factory.mktemp("yolo")
        size = (640, 480)
        dets = []
        for cx, cy, w, h in ((r[0], r[1], min(r[2], 2 * min(r[0], 1 - r[0])), min(r[3], 2 * min(r[1], 1 - r[1]))) for r in rows):
            dets.append(Detection(0, BBox.from_center(cx * size[0], cy * size[1], w * size[0], h * size[1])))
        p = tmp / "000000.txt"
        write_yolo_labels(p, dets, size)
        back = read_yolo_labels(p, size)
        assert len(back) == len(dets)
        for a, b in zip(dets, back):
            assert abs(a.bbox.cx - b.bbox.cx) / size[0] <= 1e-6
            assert abs(a.bbox.cy - b.bbox.cy) / size[1] <= 1e-6
            assert abs(a.bbox.w - b.bbox.w) / size[0] <= 1e-6
            assert abs(a.bbox.h - b.bbox.h) / size[1] <= 1e-6


class TestInstanceMasks:
    def _mask(self, pixels, size=(10, 10)):
        arr = np.zeros((size[1], size[0]), dtype=np.uint8)
        for x, y in pixels:
            arr[y, x] = 255
        return arr

    def test_round_trip_preserves_pixels(self, tmp_path):
        arr = self._mask([(1, 1), (2, 3), (5, 5), (9, 0)])
        m = InstanceMask("000000", 1, PixelImage(arr), BBox(0, 0, 10, 10))
        write_instance_masks([m], tmp_path / "index.json", tmp_path)
        (back,) = read_instance_masks(tmp_path / "index.json", tmp_path)
        assert np.array_equal(back.mask.array, arr)
        assert (back.mask.array > 0).sum() == 4

    def test_nonzero_coerced_to_255(self):
        arr = np.zeros((4, 4), dtype=np.uint8)
        arr[0, 0] = 7
        m = InstanceMask("x", 0, PixelImage(arr), BBox(0, 0, 4, 4))
        assert set(np.unique(m.mask.array)) <= {0, 255}

    def test_dimension_mismatch_names_both_sizes(self, tmp_path):
        m = InstanceMask("img0", 0, PixelImage(np.zeros((20, 20), dtype=np.uint8)), BBox(0, 0, 5, 5))
        with pytest.raises(ValueError, match="20x20.*10x10"):
            write_instance_masks([m], tmp_path / "i.json", tmp_path, {"img0": (10, 10)})

    def test_empty_mask_flagged(self, tmp_path):
        import json

        m = InstanceMask("000000", 0, PixelImage(np.zeros((8, 8), dtype=np.uint8)), BBox(0, 0, 8, 8))
        write_instance_masks([m], tmp_path / "index.json", tmp_path)
        index = json.loads((tmp_path / "index.json").read_text())
        assert index["instances"][0]["empty"] is True
        (back,) = read_instance_masks(tmp_path / "index.json", tmp_path)
        assert back.is_empty()


class TestConfig:
    def test_defaults_loaded_without_file(self):
        cfg = load_config(None)
        assert cfg["ransac.threshold_px"] == "3.0"
        assert cfg["slic.tu"] == "0.70"

    def test_round_trip(self, tmp_path):
        cfg = dict(DEFAULT_CONFIG)
        cfg["ransac.threshold_px"] = "5.5"
        save_config(cfg, tmp_path / "run.ini")
        back = load_config(tmp_path / "run.ini")
        assert back == cfg


def test_piximage_invariants():
    img = PixelImage(np.zeros((4, 6, 3), dtype=np.uint8))
    assert (img.width, img.height, img.channels) == (6, 4, 3)
    assert len(img.data) == 6 * 4 * 3
    with pytest.raises(ValueError):
        PixelImage(np.zeros((4, 6, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        PixelImage(np.zeros((0, 6), dtype=np.uint8))
