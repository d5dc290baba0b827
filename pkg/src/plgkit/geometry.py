"""Projective geometry: DLT homography fitting and RANSAC match verification.

A homography explains inter-frame displacement for small camera motions; match
proposals that disagree with the best-consensus model are discarded. Estimation
uses the normalized (Hartley) DLT; the inlier criterion is the symmetric
transfer error, i.e. the root of summed squared forward and backward residuals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import Keypoint, MatchPair

RANSAC_CONFIDENCE = 0.999


class DegenerateSampleError(ValueError):
    """Raised when a point sample cannot define a homography."""


class NoConsensusError(RuntimeError):
    """Raised when RANSAC finds no model with at least 4 inliers."""


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so h[2,2] = 1 (Frobenius norm 1 if h[2,2] ~ 0)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        norm = np.linalg.norm(m)
        if norm == 0:
            raise ValueError("zero matrix is not a homography")
        if abs(m[2, 2]) > 1e-8 * norm:
            m = m / m[2, 2]
        else:
            m = m / norm
            flat = m.ravel()
            if flat[np.argmax(np.abs(flat))] < 0:
                m = -m
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ValueError("homography is singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2], m[1, 2] = tx, ty
        return cls(m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def warp_point(h: Homography, p: tuple[float, float]) -> tuple[float, float]:
    """Apply the projective map with perspective divide to one point."""
    x, y = p
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"non-finite point {p}")
    q = h.matrix @ np.array([x, y, 1.0])
    if abs(q[2]) < 1e-12:
        raise ValueError(f"point at infinity: {p} maps to w={q[2]}")
    return float(q[0] / q[2]), float(q[1] / q[2])


def warp_points(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Vectorized projective mapping of an (N, 2) point array."""
    pts = np.asarray(pts, dtype=np.float64)
    q = np.c_[pts, np.ones(len(pts))] @ h.matrix.T
    w = q[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise ValueError("point at infinity under this homography")
    return q[:, :2] / w[:, None]


def _hartley_normalization(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    mean_dist = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if mean_dist < 1e-12:
        raise DegenerateSampleError("degenerate sample: coincident points")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts * s - s * c), t


def _any_three_collinear(pts: np.ndarray, eps: float = 1e-9) -> bool:
    n = len(pts)
    scale = max(1.0, float(np.abs(pts - pts.mean(axis=0)).max()))
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                u, v = pts[j] - pts[i], pts[k] - pts[i]
                area2 = abs(u[0] * v[1] - u[1] * v[0])
                if area2 < eps * scale * scale:
                    return True
    return False


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Fit src -> dst with the normalized direct linear transform.

    Requires at least 4 correspondences with no 3 collinear source points.
    For noise-free projective input the transfer error is below 1e-6 px.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    n = src.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 correspondences, got {n}")
    if n == 4 and _any_three_collinear(src):
        raise DegenerateSampleError("degenerate sample: 3 collinear source points")

    sn, t_src = _hartley_normalization(src)
    dn, t_dst = _hartley_normalization(dst)

    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    zero, one = np.zeros(n), np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.c_[x, y, one, zero, zero, zero, -u * x, -u * y, -u]
    a[1::2] = np.c_[zero, zero, zero, x, y, one, -v * x, -v * y, -v]

    if a.shape[0] < 9:
        # zero rows leave A^T A (hence the right singular vectors) unchanged
        # and let the thin SVD return the full 9-vector basis
        a = np.vstack([a, np.zeros((9 - a.shape[0], 9))])
    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    if sv[-2] < 1e-10 * max(sv[0], 1.0):
        raise DegenerateSampleError("degenerate sample: rank-deficient system")
    hn = vt[-1].reshape(3, 3)
    try:
        return Homography(np.linalg.inv(t_dst) @ hn @ t_src)
    except ValueError as exc:
        raise DegenerateSampleError(f"degenerate sample: {exc}") from exc


def symmetric_transfer_error(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-correspondence sqrt of forward plus backward squared residuals, in px."""
    fwd = warp_points(h, src) - dst
    bwd = warp_points(h.inverse(), dst) - src
    return np.sqrt((fwd ** 2).sum(axis=1) + (bwd ** 2).sum(axis=1))


@dataclass
class RansacResult:
    model: Homography
    inliers: list[MatchPair]
    n_iterations: int
    inlier_ratio: float


def keypoint_array(kps: list[Keypoint]) -> np.ndarray:
    return np.array([[kp.x, kp.y] for kp in kps], dtype=np.float64).reshape(-1, 2)


def ransac_homography(matches: list[MatchPair], kps_a: list[Keypoint], kps_b: list[Keypoint],
                      threshold_px: float = 3.0, max_iters: int = 2000,
                      seed: int | np.random.Generator = 0,
                      confidence: float = RANSAC_CONFIDENCE) -> RansacResult:
    """Estimate the homography with the highest consensus among match proposals.

    Repeatedly samples 4 matches, fits a homography, and counts how many other
    matches it predicts within threshold_px of symmetric transfer error. The
    iteration budget shrinks adaptively from the best inlier ratio w via the
    (1 - w^4) confidence formula and is capped at max_iters. The best model is
    re-estimated by DLT on all of its inliers. Matches are sorted canonically
    before sampling, so the result depends only on the match set and the seed,
    not on input order.
    """
    if len(matches) < 4:
        raise ValueError(f"need at least 4 matches, got {len(matches)}")
    ordered = sorted(matches, key=lambda m: (m.idx_a, m.idx_b, m.distance))
    pa, pb = keypoint_array(kps_a), keypoint_array(kps_b)
    src = pa[[m.idx_a for m in ordered]]
    dst = pb[[m.idx_b for m in ordered]]
    n = len(ordered)

    rng = np.random.default_rng(seed)
    best_mask: np.ndarray | None = None
    best_model: Homography | None = None
    best_count = 0
    best_err_sum = np.inf
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            model = dlt_homography(src[idx], dst[idx])
            err = symmetric_transfer_error(model, src, dst)
        except (DegenerateSampleError, ValueError):
            continue
        mask = err <= threshold_px
        count = int(mask.sum())
        err_sum = float(err[mask].sum())
        if count > best_count or (count == best_count and err_sum < best_err_sum):
            best_mask, best_model = mask, model
            best_count, best_err_sum = count, err_sum
            w = count / n
            if w >= 1.0:
                needed = it
            elif w > 0:
                needed = int(np.ceil(np.log(1.0 - confidence) / np.log(1.0 - w ** 4)))

    if best_model is None or best_count < 4:
        raise NoConsensusError(f"no consensus: best model has {best_count} inliers")

    # final model: DLT over all inliers of the best sample model
    try:
        refit = dlt_homography(src[best_mask], dst[best_mask])
        err = symmetric_transfer_error(refit, src, dst)
        mask = err <= threshold_px
        if int(mask.sum()) >= 4:
            best_model, best_mask = refit, mask
    except (DegenerateSampleError, ValueError):
        pass

    inliers = [m for m, keep in zip(ordered, best_mask) if keep]
    return RansacResult(best_model, inliers, it, len(inliers) / n)


@dataclass
class VerifiedPair:
    """Geometrically verified correspondences between two frames."""

    points_a: np.ndarray  # (n, 2) inlier endpoints in the first frame
    points_b: np.ndarray  # (n, 2) matched endpoints in the second frame
    homography: Homography
    n_proposals: int
    n_iterations: int

    @property
    def inlier_ratio(self) -> float:
        return len(self.points_a) / self.n_proposals if self.n_proposals else 0.0


def verify_pair(img_a, img_b, max_keypoints: int = 1000, max_hamming: int = 64,
                threshold_px: float = 3.0, max_iters: int = 2000, seed: int = 0,
                pattern_seed: int = 0) -> VerifiedPair:
    """Detect, describe, match, and RANSAC-verify one frame pair.

    Raises NoConsensusError when brute-force matching yields fewer than 4
    proposals or no homography reaches 4 inliers.
    """
    from . import features as feat

    kps_a, desc_a = feat.describe(img_a, feat.detect_keypoints(img_a, max_keypoints), pattern_seed)
    kps_b, desc_b = feat.describe(img_b, feat.detect_keypoints(img_b, max_keypoints), pattern_seed)
    proposals = feat.brute_force_match(desc_a, desc_b, max_hamming)
    if len(proposals) < 4:
        raise NoConsensusError(f"no consensus: only {len(proposals)} match proposals")
    result = ransac_homography(proposals, kps_a, kps_b, threshold_px, max_iters, seed)
    pa, pb = keypoint_array(kps_a), keypoint_array(kps_b)
    return VerifiedPair(
        points_a=pa[[m.idx_a for m in result.inliers]],
        points_b=pb[[m.idx_b for m in result.inliers]],
        homography=result.model,
        n_proposals=len(proposals),
        n_iterations=result.n_iterations,
    )


class FrameMatcher:
    """Verified-pair geometry over a frame source, with feature and pair caches.

    The loader maps a frame index to an image; features are computed once per
    frame and verified geometry once per (a, b) pair. Each pair's RANSAC run is
    seeded from (seed, a, b), so results do not depend on query order.
    """

    def __init__(self, loader, max_keypoints: int = 1000, max_hamming: int = 64,
                 threshold_px: float = 3.0, max_iters: int = 2000, seed: int = 0,
                 pattern_seed: int = 0):
        self._loader = loader
        self.max_keypoints = max_keypoints
        self.max_hamming = max_hamming
        self.threshold_px = threshold_px
        self.max_iters = max_iters
        self.seed = seed
        self.pattern_seed = pattern_seed
        self._features: dict[int, tuple[list[Keypoint], np.ndarray]] = {}
        self._pairs: dict[tuple[int, int], VerifiedPair | NoConsensusError] = {}

    def features(self, frame: int) -> tuple[list[Keypoint], np.ndarray]:
        if frame not in self._features:
            from . import features as feat

            img = self._loader(frame)
            kps = feat.detect_keypoints(img, self.max_keypoints)
            self._features[frame] = feat.describe(img, kps, self.pattern_seed)
        return self._features[frame]

    def proposals(self, frame_a: int, frame_b: int) -> list[MatchPair]:
        from . import features as feat

        _, desc_a = self.features(frame_a)
        _, desc_b = self.features(frame_b)
        return feat.brute_force_match(desc_a, desc_b, self.max_hamming)

    def _rng_seed(self, frame_a: int, frame_b: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=(frame_a, frame_b))

    def verify(self, frame_a: int, frame_b: int) -> VerifiedPair:
        """Verified correspondences frame_a -> frame_b; raises NoConsensusError."""
        key = (frame_a, frame_b)
        if key not in self._pairs:
            self._pairs[key] = self._compute_pair(frame_a, frame_b)
        cached = self._pairs[key]
        if isinstance(cached, NoConsensusError):
            raise cached
        return cached

    def _compute_pair(self, frame_a: int, frame_b: int) -> VerifiedPair | NoConsensusError:
        kps_a, _ = self.features(frame_a)
        kps_b, _ = self.features(frame_b)
        proposals = self.proposals(frame_a, frame_b)
        if len(proposals) < 4:
            return NoConsensusError(f"no consensus: only {len(proposals)} match proposals")
        try:
            result = ransac_homography(proposals, kps_a, kps_b, self.threshold_px,
                                       self.max_iters, np.random.default_rng(self._rng_seed(frame_a, frame_b)))
        except NoConsensusError as exc:
            return exc
        pa, pb = keypoint_array(kps_a), keypoint_array(kps_b)
        return VerifiedPair(
            points_a=pa[[m.idx_a for m in result.inliers]],
            points_b=pb[[m.idx_b for m in result.inliers]],
            homography=result.model,
            n_proposals=len(proposals),
            n_iterations=result.n_iterations,
        )

    def verify_in_box(self, frame_a: int, frame_b: int, box) -> VerifiedPair:
        """RANSAC restricted to proposals whose frame_a endpoint lies in the box."""
        kps_a, _ = self.features(frame_a)
        kps_b, _ = self.features(frame_b)
        proposals = [m for m in self.proposals(frame_a, frame_b)
                     if box.contains(kps_a[m.idx_a].x, kps_a[m.idx_a].y)]
        if len(proposals) < 4:
            raise NoConsensusError(f"no consensus: only {len(proposals)} proposals inside box")
        result = ransac_homography(proposals, kps_a, kps_b, self.threshold_px,
                                   self.max_iters, np.random.default_rng(self._rng_seed(frame_a, frame_b)))
        pa, pb = keypoint_array(kps_a), keypoint_array(kps_b)
        return VerifiedPair(
            points_a=pa[[m.idx_a for m in result.inliers]],
            points_b=pb[[m.idx_b for m in result.inliers]],
            homography=result.model,
            n_proposals=len(proposals),
            n_iterations=result.n_iterations,
        )
