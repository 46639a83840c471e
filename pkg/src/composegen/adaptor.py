"""Content adaptor: visual token sequences -> text-shaped conditioning.

A length-resampling 1D convolution, a dimension-mapping MLP, then attention
blocks. Trained in two stages: first against text embeddings with an L1
distance, then under the frozen diffusion generator with the noise-prediction
objective so the output carries instance-level appearance.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from composegen.common import NaNLossError, TrainSchedule, weight_checksum
from composegen.encoders import Encoders, TransformerBlock

# full-scale stage defaults, kept for reference: stage 1 lr 1e-4,
# 15 epochs, batch 2048; stage 2 lr 2e-5, 13 epochs, batch 512
PAPER_STAGE1_LR = 1e-4
PAPER_STAGE1_EPOCHS = 15
PAPER_STAGE2_LR = 2e-5
PAPER_STAGE2_EPOCHS = 13


@dataclass(frozen=True)
class AdaptorConfig:
    in_len: int = 17
    out_len: int = 8
    in_dim: int = 64
    out_dim: int = 48
    attn_layers: int = 1
    attn_heads: int = 8
    seed: int = 0

    def validate(self):
        if self.out_dim % self.attn_heads != 0:
            raise ValueError(
                f"attn_heads {self.attn_heads} must divide out_dim {self.out_dim}")

    @classmethod
    def paper(cls) -> "AdaptorConfig":
        return cls(in_len=257, out_len=77, in_dim=1024, out_dim=768)


class ContentAdaptor(nn.Module):
    def __init__(self, config: AdaptorConfig = None):
        super().__init__()
        self.config = config or AdaptorConfig()
        self.config.validate()
        cfg = self.config
        torch.manual_seed(cfg.seed)
        # full connectivity along the token axis, shared across channels
        self.length_map = nn.Linear(cfg.in_len, cfg.out_len)
        hidden = max(cfg.in_dim, cfg.out_dim)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.in_dim, hidden), nn.GELU(), nn.Linear(hidden, cfg.out_dim))
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.out_dim, cfg.attn_heads) for _ in range(cfg.attn_layers))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """(k, in_len, in_dim) -> (k, out_len, out_dim)."""
        cfg = self.config
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = tokens[None]
        if tokens.shape[1:] != (cfg.in_len, cfg.in_dim):
            raise ValueError(
                f"adaptor expects input of shape (k, {cfg.in_len}, {cfg.in_dim}), "
                f"got {tuple(tokens.shape)}")
        x = self.length_map(tokens.transpose(1, 2)).transpose(1, 2)
        x = self.mlp(x)
        for block in self.blocks:
            x = block(x)
        return x[0] if squeeze else x


def loss_dist(adapted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute elementwise difference (L1 averaged over all entries)."""
    if adapted.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(adapted.shape)} vs {tuple(target.shape)}")
    return (adapted - target).abs().mean()


def _batches(n, batch_size, steps, rng):
    for _ in range(steps):
        yield rng.choice(n, size=min(batch_size, n), replace=False)


def train_stage1(pairs, encoders: Encoders, adaptor: ContentAdaptor,
                 schedule: TrainSchedule):
    """Distance pretraining on (image, caption) pairs; encoders stay frozen.

    Returns (adaptor, loss_curve) with one loss value per step.
    """
    enc_sum_before = encoders.weight_checksum()
    images = np.stack([p[0] for p in pairs])
    captions = [p[1] for p in pairs]
    visual = encoders.encode_image(images).detach()
    text = encoders.encode_text(captions).detach()

    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    opt = torch.optim.Adam(adaptor.parameters(), lr=schedule.lr)
    curve = []
    for step, idx in enumerate(_batches(len(pairs), schedule.batch_size, schedule.steps, rng)):
        opt.zero_grad()
        loss = loss_dist(adaptor(visual[idx]), text[idx])
        if not torch.isfinite(loss):
            raise NaNLossError(step, schedule.lr)
        loss.backward()
        opt.step()
        curve.append(float(loss.detach()))
    assert encoders.weight_checksum() == enc_sum_before, "encoders must stay frozen"
    return adaptor, curve


def train_stage2(triplets, encoders: Encoders, adaptor: ContentAdaptor,
                 unet, diffusion, schedule: TrainSchedule):
    """Diffusion-supervised adaptor fine-tuning; the generator stays frozen.

    Returns (adaptor, loss_curve).
    """
    from composegen.generator.training import diffusion_loss, prepare_batch

    gen_sum_before = weight_checksum(unet)
    for p in unet.parameters():
        p.requires_grad_(False)

    x0, bg, mask, obj_rgb, _ = prepare_batch(triplets)
    visual = encoders.encode_image(obj_rgb).detach()

    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    opt = torch.optim.Adam(adaptor.parameters(), lr=schedule.lr)
    curve = []
    for step, idx in enumerate(_batches(len(triplets), schedule.batch_size, schedule.steps, rng)):
        opt.zero_grad()
        cond = adaptor(visual[idx])
        loss = diffusion_loss(unet, x0[idx], bg[idx], mask[idx], cond, diffusion)
        if not torch.isfinite(loss):
            raise NaNLossError(step, schedule.lr)
        loss.backward()
        opt.step()
        curve.append(float(loss.detach()))
    for p in unet.parameters():
        p.requires_grad_(True)
    assert weight_checksum(unet) == gen_sum_before, "generator must stay frozen"
    return adaptor, curve
