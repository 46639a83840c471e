"""Geometric and color perturbations for triplet synthesis.

An object is decoupled from its own scene by jittering the four corners of
its bounding box, solving the induced projective transform, rotating, and
color-shifting. The untouched original scene remains the ground truth.
"""

from dataclasses import dataclass

import numpy as np
from matplotlib.colors import rgb_to_hsv, hsv_to_rgb

_RESAMPLE_ATTEMPTS = 100


class DegenerateCorrespondenceError(ValueError):
    """Three of the four source points are (near-)collinear."""


@dataclass(frozen=True)
class PerturbationSpec:
    corner_offset_frac: float = 0.15     # of the bbox diagonal, inf-norm bound
    rotation_max_deg: float = 20.0       # stress preset uses 40
    hue_shift_max: float = 18.0          # degrees
    sat_scale_range: tuple = (0.7, 1.3)
    value_scale_range: tuple = (0.7, 1.3)
    rng_seed: int = 0

    def validate(self):
        if not 0.0 <= self.corner_offset_frac < 0.5:
            raise ValueError(f"corner_offset_frac must be in [0, 0.5), got {self.corner_offset_frac}")
        if not 0.0 <= self.rotation_max_deg < 90.0:
            raise ValueError(f"rotation_max_deg must be in [0, 90), got {self.rotation_max_deg}")
        for name in ("sat_scale_range", "value_scale_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi <= 0 or lo > hi:
                raise ValueError(f"{name} must be a positive interval, got ({lo}, {hi})")

    @classmethod
    def identity(cls, rng_seed: int = 0) -> "PerturbationSpec":
        return cls(corner_offset_frac=0.0, rotation_max_deg=0.0, hue_shift_max=0.0,
                   sat_scale_range=(1.0, 1.0), value_scale_range=(1.0, 1.0), rng_seed=rng_seed)


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so matrix[2, 2] == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography matrix must be 3x3, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("homography matrix has non-finite entries")
        if abs(m[2, 2] - 1.0) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "matrix", m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points through the transform."""
        pts = np.asarray(points, dtype=np.float64)
        homo = np.hstack([pts, np.ones((len(pts), 1))])
        out = homo @ self.matrix.T
        return out[:, :2] / out[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))


def bbox_corners(bbox) -> np.ndarray:
    """Corners of (x, y, w, h), ordered TL, TR, BR, BL."""
    x, y, w, h = bbox
    return np.array([[x, y], [x + w, y], [x + w, y + h], [x, y + h]], dtype=np.float64)


def _is_convex(quad: np.ndarray) -> bool:
    # all consecutive-edge cross products share one sign
    crosses = []
    for i in range(4):
        a = quad[(i + 1) % 4] - quad[i]
        b = quad[(i + 2) % 4] - quad[(i + 1) % 4]
        crosses.append(a[0] * b[1] - a[1] * b[0])
    crosses = np.array(crosses)
    return bool(np.all(crosses > 0) or np.all(crosses < 0))


def perturb_four_points(bbox, spec: PerturbationSpec):
    """Jitter the bbox corners into a convex quadrilateral.

    Returns (sources, destinations), both (4, 2). Every per-coordinate offset
    is bounded by corner_offset_frac times the bbox diagonal; non-convex draws
    are resampled, falling back to zero offsets after the attempt budget.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    src = bbox_corners(bbox)
    _, _, w, h = bbox
    bound = spec.corner_offset_frac * float(np.hypot(w, h))
    for _ in range(_RESAMPLE_ATTEMPTS):
        offsets = rng.uniform(-bound, bound, size=(4, 2))
        dst = src + offsets
        if _is_convex(dst):
            return src, dst
    return src, src.copy()


def homography_from_correspondences(pairs) -> Homography:
    """DLT solve of the projective transform from four point pairs.

    pairs: (sources, destinations), each (4, 2). Raises
    DegenerateCorrespondenceError when three source points are collinear.
    """
    src, dst = (np.asarray(p, dtype=np.float64) for p in pairs)
    if src.shape != (4, 2) or dst.shape != (4, 2):
        raise ValueError(f"expected four point pairs, got {src.shape} / {dst.shape}")

    # collinearity test on every source triple
    for i in range(4):
        tri = np.delete(src, i, axis=0)
        area2 = abs((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                    - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1]))
        if area2 < 1e-9:
            raise DegenerateCorrespondenceError(
                f"source points {[j for j in range(4) if j != i]} are collinear"
            )

    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = src[i]
        u, v = dst[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCorrespondenceError(f"singular DLT system: {exc}") from exc
    h = np.append(sol, 1.0).reshape(3, 3)
    return Homography(h)


def apply_hsv_jitter(image: np.ndarray, hue_shift_deg: float,
                     sat_scale: float, val_scale: float) -> np.ndarray:
    """Rotate hue and scale saturation/value of an RGB [0,1] image."""
    image = np.asarray(image, dtype=np.float64)
    if image.min() < 0 or image.max() > 1:
        raise ValueError("image must be RGB in [0, 1]")
    if hue_shift_deg == 0.0 and sat_scale == 1.0 and val_scale == 1.0:
        return image.copy()
    hsv = rgb_to_hsv(image)
    hsv[..., 0] = (hsv[..., 0] + hue_shift_deg / 360.0) % 1.0
    hsv[..., 1] = np.clip(hsv[..., 1] * sat_scale, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * val_scale, 0.0, 1.0)
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def color_jitter(image: np.ndarray, spec: PerturbationSpec) -> np.ndarray:
    """Seeded HSV jitter within configured bounds.

    Deterministic per spec.rng_seed; the draw stream is independent of the
    geometric draws (separate seed offset).
    """
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([spec.rng_seed, 0xC0108]))
    hue_shift = rng.uniform(-spec.hue_shift_max, spec.hue_shift_max)
    sat_scale = rng.uniform(*spec.sat_scale_range)
    val_scale = rng.uniform(*spec.value_scale_range)
    return apply_hsv_jitter(image, hue_shift, sat_scale, val_scale)
