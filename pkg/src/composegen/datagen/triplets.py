"""Training triplets: perturbed object, original background, bbox mask."""

import copy
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from composegen.datagen.perturb import (
    PerturbationSpec,
    perturb_four_points,
    homography_from_correspondences,
    color_jitter,
)
from composegen.datagen.scenes import Scene, MIN_BBOX_AREA_FRAC, MAX_BBOX_AREA_FRAC
from composegen.datagen.warp import warp_and_rotate


@dataclass(frozen=True)
class AugmentationSpec:
    min_crop_frac: float = 0.6
    max_shift_frac: float = 0.2
    rng_seed: int = 0

    def validate(self):
        if not 0.0 < self.min_crop_frac <= 1.0:
            raise ValueError(f"min_crop_frac must be in (0, 1], got {self.min_crop_frac}")
        if not 0.0 <= self.max_shift_frac <= 1.0:
            raise ValueError(f"max_shift_frac must be in [0, 1], got {self.max_shift_frac}")


@dataclass
class TrainingTriplet:
    object_image: np.ndarray      # (H, W, 4) uint8 RGBA, perturbed extracted object
    background_image: np.ndarray  # (H, W, 3) uint8, the untouched scene (= ground truth)
    mask: np.ndarray              # (H, W) uint8 {0, 1}; 0 inside the object bbox
    caption: str
    bbox: tuple                   # (x, y, w, h) floats, background pixel coords
    augmented: bool = field(default=False, compare=False)

    def validate(self):
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must take only values {0, 1}")
        if self.mask.shape != self.background_image.shape[:2]:
            raise ValueError("background_image and mask must share spatial dimensions")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError("bbox must have positive extent")


def bbox_mask(shape, bbox) -> np.ndarray:
    """Mask that is 0 inside the (integer-rounded) bbox rectangle, 1 elsewhere."""
    mask = np.ones(shape, dtype=np.uint8)
    x, y, w, h = bbox
    x0, y0 = int(round(x)), int(round(y))
    x1, y1 = int(round(x + w)), int(round(y + h))
    mask[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = 0
    return mask


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def make_training_triplet(scene: Scene, object_index: int,
                          pert: PerturbationSpec) -> TrainingTriplet:
    """Build the self-supervised (object, background, mask) unit.

    The chosen object is color-jittered, extracted, four-point warped and
    rotated; the unmodified scene doubles as ground truth, with its mask the
    bbox of the ORIGINAL (unperturbed) object zeroed out.
    """
    pert.validate()
    mask = scene.masks[object_index]
    bbox = scene.bboxes[object_index]
    area_frac = (bbox[2] * bbox[3]) / (mask.shape[0] * mask.shape[1])
    if not MIN_BBOX_AREA_FRAC <= area_frac <= MAX_BBOX_AREA_FRAC:
        raise ValueError(f"object {object_index} fails the size filter (area frac {area_frac:.3f})")

    rng = np.random.default_rng(np.random.SeedSequence([pert.rng_seed, 0x90707]))
    angle = float(rng.uniform(-pert.rotation_max_deg, pert.rotation_max_deg))
    if pert.rotation_max_deg == 0.0:
        angle = 0.0

    jittered = color_jitter(scene.image, pert)
    pairs = perturb_four_points(bbox, pert)
    homography = homography_from_correspondences(pairs)
    rgba, _ = warp_and_rotate(jittered, mask, homography, angle)

    return TrainingTriplet(
        object_image=_to_u8(rgba),
        background_image=_to_u8(scene.image),
        mask=bbox_mask(mask.shape, bbox),
        caption=scene.labels[object_index],
        bbox=tuple(float(v) for v in bbox),
    )


def _resize(img: np.ndarray, size: int, resample) -> np.ndarray:
    return np.asarray(Image.fromarray(img).resize((size, size), resample))


def crop_shift_augment(triplet: TrainingTriplet, spec: AugmentationSpec) -> TrainingTriplet:
    """Randomly crop/shift background and mask, keeping the object inside.

    The crop window always contains the object bbox; the crop is resized back
    to the original canvas size and the bbox remapped accordingly. When no
    valid window exists the input comes back unchanged with augmented=False.
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    size = triplet.background_image.shape[0]
    x, y, w, h = triplet.bbox

    min_crop = max(int(np.ceil(spec.min_crop_frac * size)), int(np.ceil(max(w, h))))
    if min_crop > size:
        out = copy.deepcopy(triplet)
        out.augmented = False
        return out

    crop = int(rng.integers(min_crop, size + 1))
    # window must contain the bbox and stay on canvas; shift bounded separately
    lo_x = max(0, int(np.ceil(x + w)) - crop)
    hi_x = min(size - crop, int(np.floor(x)))
    lo_y = max(0, int(np.ceil(y + h)) - crop)
    hi_y = min(size - crop, int(np.floor(y)))
    if lo_x > hi_x or lo_y > hi_y:
        out = copy.deepcopy(triplet)
        out.augmented = False
        return out
    # shift: window origin stays within max_shift_frac of the centered origin
    center_origin = (size - crop) / 2.0
    max_shift = spec.max_shift_frac * size
    lo_x = max(lo_x, int(np.ceil(center_origin - max_shift)))
    hi_x = min(hi_x, int(np.floor(center_origin + max_shift)))
    lo_y = max(lo_y, int(np.ceil(center_origin - max_shift)))
    hi_y = min(hi_y, int(np.floor(center_origin + max_shift)))
    if lo_x > hi_x or lo_y > hi_y:
        out = copy.deepcopy(triplet)
        out.augmented = False
        return out
    cx = int(rng.integers(lo_x, hi_x + 1))
    cy = int(rng.integers(lo_y, hi_y + 1))
    return apply_crop_window(triplet, cx, cy, crop)


def apply_crop_window(triplet: TrainingTriplet, cx: int, cy: int,
                      crop: int) -> TrainingTriplet:
    """Crop a (cx, cy, crop, crop) window, resize back, remap the bbox."""
    size = triplet.background_image.shape[0]
    x, y, w, h = triplet.bbox
    scale = size / crop
    bg_crop = triplet.background_image[cy:cy + crop, cx:cx + crop]
    mask_crop = triplet.mask[cy:cy + crop, cx:cx + crop]
    if crop == size:
        bg, mask = bg_crop.copy(), mask_crop.copy()
    else:
        bg = _resize(bg_crop, size, Image.BILINEAR)
        mask = _resize(mask_crop, size, Image.NEAREST)

    new_bbox = ((x - cx) * scale, (y - cy) * scale, w * scale, h * scale)
    return TrainingTriplet(
        object_image=triplet.object_image.copy(),
        background_image=bg,
        mask=mask,
        caption=triplet.caption,
        bbox=new_bbox,
        augmented=True,
    )
