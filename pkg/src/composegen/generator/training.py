"""Masked diffusion training objective and generator fine-tuning."""

import numpy as np
import torch

from composegen.common import NaNLossError, TrainSchedule, weight_checksum
from composegen.generator.schedule import DiffusionSchedule, q_sample
from composegen.generator.unet import UNet, unet_forward

# full-scale stage-3 defaults, kept for reference: lr 4e-5, 20 epochs, batch 576
PAPER_STAGE3_LR = 4e-5
PAPER_STAGE3_EPOCHS = 20


def to_model_range(img_u8: np.ndarray) -> torch.Tensor:
    """uint8 [0,255] -> float tensor in [-1, 1], channels first."""
    x = torch.from_numpy(np.asarray(img_u8, dtype=np.float32)) / 127.5 - 1.0
    return x.permute(2, 0, 1) if x.ndim == 3 else x


def from_model_range(x: torch.Tensor) -> np.ndarray:
    """(3, H, W) float in [-1, 1] -> uint8 (H, W, 3)."""
    arr = ((x.clamp(-1, 1) + 1.0) * 127.5).round().clamp(0, 255)
    return arr.permute(1, 2, 0).cpu().numpy().astype(np.uint8)


def prepare_batch(triplets, dtype=torch.float32):
    """Triplets -> (x0, background, mask, object_rgb, captions) tensors.

    x0 and background are identical by construction (the original scene is
    the ground truth); both are kept so the blended-input contract stays
    explicit. object_rgb is the alpha-premultiplied object in [0, 1] for the
    visual encoder.
    """
    x0 = torch.stack([to_model_range(t.background_image) for t in triplets]).to(dtype)
    mask = torch.stack([
        torch.from_numpy(np.asarray(t.mask, dtype=np.float32))[None] for t in triplets]).to(dtype)
    obj = np.stack([np.asarray(t.object_image[..., :3], dtype=np.float64) / 255.0
                    for t in triplets])
    captions = [t.caption for t in triplets]
    return x0, x0.clone(), mask, obj, captions


def diffusion_loss(unet: UNet, x0, background, mask, cond,
                   schedule: DiffusionSchedule, t=None, eps=None):
    """MSE between drawn noise and the prediction from the blended input.

    The blended noisy input carries noised ground truth in the hole and
    noised background elsewhere; outside the hole the two coincide because
    the background IS the ground truth.
    """
    k = x0.shape[0]
    if t is None:
        t = torch.randint(1, schedule.num_timesteps + 1, (k,))
    if eps is None:
        eps = torch.randn_like(x0)
    x_t = q_sample(x0, t, eps, schedule)
    bg_t = q_sample(background, t, eps, schedule)
    blended = x_t * (1.0 - mask) + bg_t * mask
    pred = unet_forward(unet, blended, background, mask, t, cond)
    return ((eps - pred) ** 2).mean()


def loss_gen(unet: UNet, triplets, cond, schedule: DiffusionSchedule,
             t=None, eps=None) -> torch.Tensor:
    """Noise-prediction objective on a triplet batch."""
    x0, bg, mask, _, _ = prepare_batch(triplets, dtype=next(unet.parameters()).dtype)
    return diffusion_loss(unet, x0, bg, mask, cond, schedule, t=t, eps=eps)


def train_stage3(triplets, encoders, adaptor, unet: UNet,
                 schedule: TrainSchedule, diffusion: DiffusionSchedule,
                 aug_spec=None):
    """Generator fine-tuning with the adaptor frozen.

    Crop/shift augmentation is applied per step when aug_spec is given.
    Returns (unet, loss_curve).
    """
    from composegen.datagen.triplets import crop_shift_augment

    adaptor_sum_before = weight_checksum(adaptor)
    for p in adaptor.parameters():
        p.requires_grad_(False)

    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    opt = torch.optim.Adam(unet.parameters(), lr=schedule.lr)
    curve = []
    n = len(triplets)
    for step in range(schedule.steps):
        idx = rng.choice(n, size=min(schedule.batch_size, n), replace=False)
        batch = [triplets[i] for i in idx]
        if aug_spec is not None:
            import dataclasses
            batch = [crop_shift_augment(
                t, dataclasses.replace(aug_spec, rng_seed=int(rng.integers(2 ** 31))))
                for t in batch]
        x0, bg, mask, obj_rgb, _ = prepare_batch(batch)
        with torch.no_grad():
            cond = adaptor(encoders.encode_image(obj_rgb))
        opt.zero_grad()
        loss = diffusion_loss(unet, x0, bg, mask, cond, diffusion)
        if not torch.isfinite(loss):
            raise NaNLossError(step, schedule.lr)
        loss.backward()
        opt.step()
        curve.append(float(loss.detach()))
    for p in adaptor.parameters():
        p.requires_grad_(True)
    assert weight_checksum(adaptor) == adaptor_sum_before, "adaptor must stay frozen"
    return unet, curve
