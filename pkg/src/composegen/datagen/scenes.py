"""Procedural labeled scenes: simple colored shapes on simple backgrounds.

Stands in for a photo corpus with instance segmentation. Every scene comes
with exact per-object binary masks and class labels, so the whole pipeline
stays label-free.
"""

from dataclasses import dataclass, field

import numpy as np

SHAPE_KINDS = ("circle", "square", "triangle", "star")
BACKGROUND_TEXTURES = ("flat", "gradient", "noise")

# bbox area as a fraction of canvas area; objects outside this band are
# rejected (too small to matter, too large to composite)
MIN_BBOX_AREA_FRAC = 0.02
MAX_BBOX_AREA_FRAC = 0.40

_PLACEMENT_ATTEMPTS = 100


class UnsatisfiableSceneError(ValueError):
    """Raised when objects cannot be placed without overlap."""


@dataclass(frozen=True)
class SceneSpec:
    canvas_size: int = 64
    num_objects: int = 1
    shape_vocabulary: tuple = SHAPE_KINDS
    background_texture: str = "gradient"
    rng_seed: int = 0

    def validate(self):
        if self.canvas_size < 32:
            raise ValueError(f"canvas_size must be >= 32, got {self.canvas_size}")
        if not 1 <= self.num_objects <= 3:
            raise ValueError(f"num_objects must be in [1, 3], got {self.num_objects}")
        if self.background_texture not in BACKGROUND_TEXTURES:
            raise ValueError(f"unknown background_texture {self.background_texture!r}")
        for kind in self.shape_vocabulary:
            if kind not in SHAPE_KINDS:
                raise ValueError(f"unknown shape kind {kind!r}")


@dataclass
class Scene:
    image: np.ndarray            # (S, S, 3) float64 in [0, 1]
    masks: list = field(default_factory=list)   # (S, S) uint8 in {0, 1}, one per object
    labels: list = field(default_factory=list)  # class label strings
    bboxes: list = field(default_factory=list)  # (x, y, w, h) ints, tight around mask


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    s = spec.canvas_size
    base = rng.uniform(0.2, 0.8, size=3)
    if spec.background_texture == "flat":
        return np.broadcast_to(base, (s, s, 3)).copy()
    if spec.background_texture == "gradient":
        other = rng.uniform(0.2, 0.8, size=3)
        t = np.linspace(0.0, 1.0, s)
        ramp = np.outer(t, np.ones(s)) if rng.random() < 0.5 else np.outer(np.ones(s), t)
        return base[None, None, :] * (1 - ramp[..., None]) + other[None, None, :] * ramp[..., None]
    # noise: low-amplitude speckle around the base color
    noise = rng.uniform(-0.1, 0.1, size=(s, s, 3))
    return np.clip(base[None, None, :] + noise, 0.0, 1.0)


def _shape_mask(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Binary mask of one shape drawn into a (size, size) tile."""
    yy, xx = np.mgrid[0:size, 0:size]
    cx = cy = (size - 1) / 2.0
    r = size / 2.0 - 0.5
    if kind == "circle":
        return ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r).astype(np.uint8)
    if kind == "square":
        return np.ones((size, size), dtype=np.uint8)
    if kind == "triangle":
        # upward triangle: apex at top center, base at the bottom
        fy = (yy + 0.5) / size
        half_width = fy * (size / 2.0)
        return (np.abs(xx - cx) <= half_width).astype(np.uint8)
    if kind == "star":
        ang = np.arctan2(yy - cy, xx - cx) + rng.uniform(0, 2 * np.pi)
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        spikes = 5
        inner = 0.45 * r
        radius = inner + (r - inner) * (0.5 + 0.5 * np.cos(spikes * ang))
        return (dist <= radius).astype(np.uint8)
    raise ValueError(f"unknown shape kind {kind!r}")


def _tight_bbox(mask: np.ndarray):
    ys, xs = np.nonzero(mask)
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ys.min(), ys.max()
    return (int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1))


def generate_scene(spec: SceneSpec) -> Scene:
    """Render a scene with non-overlapping labeled shapes.

    Deterministic per seed. Raises UnsatisfiableSceneError when num_objects
    shapes cannot be placed without overlap within the attempt budget.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    s = spec.canvas_size
    image = _background(spec, rng)
    occupied = np.zeros((s, s), dtype=np.uint8)
    masks, labels, bboxes = [], [], []

    canvas_area = s * s
    for _ in range(spec.num_objects):
        placed = False
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            kind = spec.shape_vocabulary[rng.integers(len(spec.shape_vocabulary))]
            # pick tile size so the tile (= bbox upper bound) obeys the area band
            lo = int(np.ceil(np.sqrt(MIN_BBOX_AREA_FRAC * canvas_area) / 0.6))
            hi = int(np.floor(np.sqrt(MAX_BBOX_AREA_FRAC * canvas_area)))
            size = int(rng.integers(lo, hi + 1))
            x0 = int(rng.integers(0, s - size + 1))
            y0 = int(rng.integers(0, s - size + 1))
            tile = _shape_mask(kind, size, rng)
            mask = np.zeros((s, s), dtype=np.uint8)
            mask[y0:y0 + size, x0:x0 + size] = tile
            bbox = _tight_bbox(mask)
            area_frac = (bbox[2] * bbox[3]) / canvas_area
            if not MIN_BBOX_AREA_FRAC <= area_frac <= MAX_BBOX_AREA_FRAC:
                continue
            if np.any(occupied & mask):
                continue
            color = rng.uniform(0.0, 1.0, size=3)
            image = np.where(mask[..., None].astype(bool), color[None, None, :], image)
            occupied |= mask
            masks.append(mask)
            labels.append(kind)
            bboxes.append(bbox)
            placed = True
            break
        if not placed:
            raise UnsatisfiableSceneError(
                f"could not place {spec.num_objects} non-overlapping objects "
                f"within {_PLACEMENT_ATTEMPTS} attempts (seed {spec.rng_seed})"
            )
    return Scene(image=image, masks=masks, labels=labels, bboxes=bboxes)
