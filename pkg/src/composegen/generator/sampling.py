"""Masked-blending ancestral sampling.

Reverse diffusion runs on the whole canvas, but after every step the known
region (mask == 1) is replaced by the background noised to the current
timestep, so only the hole is ever generated. The final image carries the
background bytes untouched outside the hole.
"""

from dataclasses import dataclass

import numpy as np
import torch

from composegen.generator.schedule import DiffusionSchedule
from composegen.generator.training import from_model_range, to_model_range

SHOWCASE_STEPS = 100   # qualitative composites
BATCH_EVAL_STEPS = 50  # batched metric runs


@dataclass
class CompositeRequest:
    background: np.ndarray    # (S, S, 3) uint8
    mask: np.ndarray          # (S, S) uint8 {0,1}, 0 = hole
    object_image: np.ndarray  # (h, w, 4) uint8 RGBA (or (h, w, 3) treated opaque)
    steps: int = SHOWCASE_STEPS
    seed: int = 0

    def validate(self):
        if not np.isin(self.mask, (0, 1)).all():
            raise ValueError("mask must be binary")
        if self.mask.shape != self.background.shape[:2]:
            raise ValueError("mask and background spatial shapes differ")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def blend(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """a where mask == 0 (the hole), b where mask == 1."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask must be binary")
    while m.ndim < np.ndim(a):
        m = m[..., None]
    return a * (1 - m) + b * m


def _object_rgb(obj: np.ndarray) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64) / 255.0
    if arr.shape[-1] == 4:
        return arr[..., :3] * arr[..., 3:4]
    return arr


def sample_composites(requests, encoders, adaptor, unet,
                      schedule: DiffusionSchedule) -> list:
    """Generate composites for a batch of equally-sized, equal-step requests.

    Per-request noise streams come from per-request generators, so each
    output depends only on its own request (seed included), never on batch
    composition. Pixels where mask == 1 equal the background bit-for-bit.
    """
    if adaptor is None or unet is None:
        raise ValueError("sampling needs trained adaptor and generator weights")
    if not requests:
        return []
    steps = requests[0].steps
    for req in requests:
        req.validate()
        if req.steps != steps:
            raise ValueError("batched requests must share the step count")
    unet.eval()

    with torch.no_grad():
        obj_batch = np.stack([_object_rgb(r.object_image) for r in requests])
        cond = adaptor(encoders.encode_image(obj_batch))

    gens = [torch.Generator().manual_seed(r.seed) for r in requests]
    shape = (3, requests[0].background.shape[0], requests[0].background.shape[1])

    def draw():
        return torch.stack([torch.randn(shape, generator=g) for g in gens])

    bg = torch.stack([to_model_range(r.background) for r in requests])
    mask_t = torch.stack([
        torch.from_numpy(r.mask.astype(np.float32))[None] for r in requests])
    abars = torch.from_numpy(schedule.alpha_bars).float()

    # evenly sub-sampled timestep ladder, descending, 1-based
    ts = np.unique(np.linspace(1, schedule.num_timesteps, steps).round().astype(int))[::-1]

    x = draw()
    ab = abars[ts[0] - 1]
    x = x * (1 - mask_t) + (ab.sqrt() * bg + (1 - ab).sqrt() * draw()) * mask_t

    with torch.no_grad():
        for i, t in enumerate(ts):
            t_prev = ts[i + 1] if i + 1 < len(ts) else 0
            ab_t = abars[t - 1]
            ab_prev = abars[t_prev - 1] if t_prev > 0 else torch.tensor(1.0)

            eps_hat = unet(torch.cat([x, bg, mask_t], dim=1),
                           torch.full((len(requests),), int(t)), cond)
            x0_hat = ((x - (1 - ab_t).sqrt() * eps_hat) / ab_t.sqrt()).clamp(-1, 1)
            sigma = ((1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev)).clamp(min=0).sqrt()
            dir_coef = (1 - ab_prev - sigma ** 2).clamp(min=0).sqrt()
            noise = draw() if t_prev > 0 else torch.zeros_like(x)
            x = ab_prev.sqrt() * x0_hat + dir_coef * eps_hat + sigma * noise

            # replace the known region with the background noised to t_prev
            bg_t = (ab_prev.sqrt() * bg + (1 - ab_prev).sqrt() * draw()) if t_prev > 0 else bg
            x = x * (1 - mask_t) + bg_t * mask_t

    outs = []
    for j, req in enumerate(requests):
        out = from_model_range(x[j])
        keep = req.mask.astype(bool)  # bitwise background preservation
        out[keep] = req.background[keep]
        outs.append(out)
    return outs


def sample_composite(request: CompositeRequest, encoders, adaptor, unet,
                     schedule: DiffusionSchedule) -> np.ndarray:
    """Generate one composite; returns (S, S, 3) uint8, deterministic per seed."""
    return sample_composites([request], encoders, adaptor, unet, schedule)[0]
