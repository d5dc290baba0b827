import numpy as np
import pytest
from scipy import ndimage

from plgkit.maskrefine import refine_slic, rgb_to_lab, slic


def assert_connected_partition(labels: np.ndarray):
    values = np.unique(labels)
    assert np.array_equal(values, np.arange(len(values))), "labels must be 0..L-1"
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    for v in values:
        _, n = ndimage.label(labels == v, structure=structure)
        assert n == 1, f"label {v} split into {n} components"


class TestRgbToLab:
    def test_reference_values(self):
        # white, black, and sRGB primary red against standard D65 references
        rgb = np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0]]], dtype=np.uint8)
        lab = rgb_to_lab(rgb)
        assert np.allclose(lab[0, 0], [100.0, 0.0, 0.0], atol=0.01)
        assert np.allclose(lab[0, 1], [0.0, 0.0, 0.0], atol=0.01)
        assert np.allclose(lab[0, 2], [53.24, 80.09, 67.20], atol=0.05)

    def test_gray_axis_has_no_chroma(self):
        # bounded by the rounding of the published matrix constants
        grays = np.arange(0, 256, 15, dtype=np.uint8).reshape(1, -1, 1).repeat(3, axis=2)
        lab = rgb_to_lab(grays)
        assert np.abs(lab[..., 1:]).max() < 5e-4


class TestSlic:
    def test_uniform_image_quadrants(self):
        # zero colour variance: the objective degenerates to spatial k-means,
        # whose optimum on a square with K=4 is the four quadrants
        img = np.full((100, 100, 3), 120, dtype=np.uint8)
        labels = slic(img, k=4, m=0.1)
        assert_connected_partition(labels)
        sizes = np.bincount(labels.ravel())
        assert len(sizes) == 4
        assert np.all(np.abs(sizes - 2500) <= 250)

    def test_k1_single_segment(self):
        img = np.zeros((20, 30, 3), dtype=np.uint8)
        labels = slic(img, k=1)
        assert labels.max() == 0 and labels.min() == 0

    def test_two_colour_halves_align(self):
        img = np.zeros((60, 60, 3), dtype=np.uint8)
        img[:, :30] = (200, 40, 40)
        img[:, 30:] = (40, 40, 200)
        labels = slic(img, k=2, m=0.1)
        left = labels[:, :30]
        right = labels[:, 30:]
        left_major = np.bincount(left.ravel()).argmax()
        right_major = np.bincount(right.ravel()).argmax()
        assert left_major != right_major
        correct = (left == left_major).sum() + (right == right_major).sum()
        assert correct / img[:, :, 0].size >= 0.99

    def test_k_exceeding_pixels_rejected(self):
        with pytest.raises(ValueError, match="exceeds pixel count"):
            slic(np.zeros((5, 5, 3), dtype=np.uint8), k=26)
        with pytest.raises(ValueError):
            slic(np.zeros((5, 5, 3), dtype=np.uint8), k=0)

    def test_segment_count_and_connectivity_on_texture(self, rng):
        img = rng.integers(0, 256, size=(80, 80, 3), dtype=np.uint8)
        img = ndimage.uniform_filter(img.astype(float), size=(5, 5, 1)).astype(np.uint8)
        k = 40
        labels = slic(img, k=k, m=10.0)
        assert_connected_partition(labels)
        n = labels.max() + 1
        assert k / 2 <= n <= 2 * k

    def test_every_pixel_labelled(self, rng):
        img = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
        labels = slic(img, k=16, m=1.0)
        assert labels.shape == (40, 40)
        assert labels.min() >= 0

    def test_deterministic(self, rng):
        img = rng.integers(0, 256, size=(50, 50, 3), dtype=np.uint8)
        assert np.array_equal(slic(img, k=20, m=1.0), slic(img, k=20, m=1.0))


class TestRefineSlic:
    def _grid_labels(self, h=20, w=20, cell=5):
        yy, xx = np.mgrid[0:h, 0:w]
        return (yy // cell) * (w // cell) + (xx // cell)

    def test_fully_covered_superpixel_stays(self):
        labels = self._grid_labels()
        mask = labels == 0
        out = refine_slic(mask, labels)
        assert np.array_equal(out, mask)

    def test_half_coverage_untouched(self):
        labels = self._grid_labels()
        mask = np.zeros((20, 20), dtype=bool)
        sel = np.argwhere(labels == 3)
        half = sel[: len(sel) // 2]
        mask[half[:, 0], half[:, 1]] = True
        out = refine_slic(mask, labels)
        assert np.array_equal(out, mask)

    def test_threshold_values_70_30(self):
        labels = self._grid_labels()
        mask = np.zeros((20, 20), dtype=bool)
        sel5 = np.argwhere(labels == 5)
        sel7 = np.argwhere(labels == 7)
        n = len(sel5)
        # 75% coverage -> fully added; 25% coverage -> fully cleared
        mask[tuple(sel5[: int(0.75 * n)].T)] = True
        mask[tuple(sel7[: int(0.25 * n)].T)] = True
        out = refine_slic(mask, labels)
        assert out[labels == 5].all()
        assert not out[labels == 7].any()

    def test_exact_boundary_values(self):
        labels = self._grid_labels(10, 10, 5)  # 4 superpixels of 25 px
        mask = np.zeros((10, 10), dtype=bool)
        sel0 = np.argwhere(labels == 0)
        sel1 = np.argwhere(labels == 1)
        mask[tuple(sel0[:20].T)] = True   # coverage 0.80 >= 0.70 -> added
        mask[tuple(sel1[:5].T)] = True    # coverage 0.20 <= 0.30 -> cleared
        out = refine_slic(mask, labels, t_u=0.70, t_l=0.30)
        assert out[labels == 0].all()
        assert not out[labels == 1].any()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            refine_slic(np.zeros((5, 5), dtype=bool), np.zeros((6, 6), dtype=int))
