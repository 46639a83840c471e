"""Inverse-mapped projective warps for object extraction.

The hot per-pixel loops have a numba variant and a vectorized numpy variant;
see composegen.accel for the toggle. Pixels are sampled bilinearly, masks
with nearest-neighbor so they stay binary.
"""

import numpy as np

from composegen.accel import NUMBA_ENABLED, njit_or_fallback
from composegen.datagen.perturb import Homography


class EmptyWarpResultError(ValueError):
    """The transform moved the object fully outside the canvas."""


@njit_or_fallback
def _bilinear_kernel(src, inv, out):
    h, w, c = src.shape
    oh, ow = out.shape[0], out.shape[1]
    for y in range(oh):
        for x in range(ow):
            denom = inv[2, 0] * x + inv[2, 1] * y + inv[2, 2]
            if denom == 0.0:
                continue
            sx = (inv[0, 0] * x + inv[0, 1] * y + inv[0, 2]) / denom
            sy = (inv[1, 0] * x + inv[1, 1] * y + inv[1, 2]) / denom
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            for k in range(c):
                acc = 0.0
                for dy in range(2):
                    for dx in range(2):
                        yy = y0 + dy
                        xx = x0 + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            wgt = (fx if dx == 1 else 1.0 - fx) * (fy if dy == 1 else 1.0 - fy)
                            acc += wgt * src[yy, xx, k]
                out[y, x, k] = acc


@njit_or_fallback
def _nearest_kernel(src, inv, out):
    h, w = src.shape
    oh, ow = out.shape
    for y in range(oh):
        for x in range(ow):
            denom = inv[2, 0] * x + inv[2, 1] * y + inv[2, 2]
            if denom == 0.0:
                continue
            sx = (inv[0, 0] * x + inv[0, 1] * y + inv[0, 2]) / denom
            sy = (inv[1, 0] * x + inv[1, 1] * y + inv[1, 2]) / denom
            xx = int(np.floor(sx + 0.5))
            yy = int(np.floor(sy + 0.5))
            if 0 <= yy < h and 0 <= xx < w:
                out[y, x] = src[yy, xx]


def _source_coords(inv, oh, ow):
    ys, xs = np.mgrid[0:oh, 0:ow]
    denom = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    denom = np.where(denom == 0.0, np.inf, denom)
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / denom
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / denom
    return sx, sy


def _bilinear_numpy(src, inv, out):
    h, w, c = src.shape
    sx, sy = _source_coords(inv, out.shape[0], out.shape[1])
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    acc = np.zeros(out.shape, dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            wgt = np.where(dx == 1, fx, 1.0 - fx) * np.where(dy == 1, fy, 1.0 - fy)
            vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            acc += np.where(valid, wgt, 0.0)[..., None] * vals
    out[...] = acc


def _nearest_numpy(src, inv, out):
    h, w = src.shape
    sx, sy = _source_coords(inv, out.shape[0], out.shape[1])
    xx = np.floor(sx + 0.5).astype(np.int64)
    yy = np.floor(sy + 0.5).astype(np.int64)
    valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
    vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
    out[...] = np.where(valid, vals, 0)


def warp_image(src: np.ndarray, transform: Homography, out_shape=None) -> np.ndarray:
    """Bilinear inverse warp of an (H, W, C) float image; outside samples are 0."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    oh, ow = out_shape if out_shape is not None else src.shape[:2]
    out = np.zeros((oh, ow, src.shape[2]), dtype=np.float64)
    inv = np.ascontiguousarray(transform.inverse().matrix)
    if NUMBA_ENABLED:
        _bilinear_kernel(src, inv, out)
    else:
        _bilinear_numpy(src, inv, out)
    return out


def warp_mask(mask: np.ndarray, transform: Homography, out_shape=None) -> np.ndarray:
    """Nearest-neighbor inverse warp of a binary (H, W) mask; outside is 0."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    oh, ow = out_shape if out_shape is not None else mask.shape
    out = np.zeros((oh, ow), dtype=np.uint8)
    inv = np.ascontiguousarray(transform.inverse().matrix)
    if NUMBA_ENABLED:
        _nearest_kernel(mask, inv, out)
    else:
        _nearest_numpy(mask, inv, out)
    return out


def rotation_about(center, angle_deg: float) -> Homography:
    cx, cy = center
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    rot = np.array([
        [c, -s, cx - c * cx + s * cy],
        [s, c, cy - s * cx - c * cy],
        [0.0, 0.0, 1.0],
    ])
    return Homography(rot)


def warp_and_rotate(object_pixels: np.ndarray, mask: np.ndarray,
                    homography: Homography, angle_deg: float):
    """Warp an object (pixels + binary mask) by a homography then a rotation.

    The rotation is taken about the center of the input mask's bounding box,
    and the mask goes through the identical transform as the pixels. Returns
    (rgba, warped_mask): rgba is (H, W, 4) float with mask-premultiplied
    color and alpha = warped mask.
    """
    object_pixels = np.asarray(object_pixels, dtype=np.float64)
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary")
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise EmptyWarpResultError("input mask is empty")
    center = ((xs.min() + xs.max()) / 2.0, (ys.min() + ys.max()) / 2.0)
    combined = Homography(rotation_about(center, angle_deg).matrix @ homography.matrix)

    premult = object_pixels * mask[..., None]
    warped_rgb = warp_image(premult, combined)
    warped_mask = warp_mask(mask, combined)
    if warped_mask.sum() == 0:
        raise EmptyWarpResultError("transform moved the object fully outside the canvas")
    rgba = np.concatenate([warped_rgb, warped_mask[..., None].astype(np.float64)], axis=2)
    # keep color premultiplied by the binary alpha so stray bilinear bleed
    # outside the mask never shows
    rgba[..., :3] *= warped_mask[..., None]
    return np.clip(rgba, 0.0, 1.0), warped_mask
