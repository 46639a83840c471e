"""Conditional denoising U-Net with cross-attention conditioning.

Input is the channel stack [blended noisy image (3), clean background (3),
mask (1)]; output is the predicted noise (3). Conditioning token sequences
enter through cross-attention at the configured feature-map resolutions.
The architecture is deliberately lean (one residual block and one skip per
resolution level) so desk-scale training fits a CPU budget.
"""

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F


@dataclass(frozen=True)
class UNetConfig:
    image_size: int = 64
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 4)
    attention_resolutions: tuple = (16,)
    cond_dim: int = 48
    in_channels: int = 7
    out_channels: int = 3
    heads: int = 4
    seed: int = 0

    def validate(self):
        if self.image_size % (2 ** (len(self.channel_mults) - 1)) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{len(self.channel_mults) - 1}")


def cross_attention(tokens: torch.Tensor, cond: torch.Tensor,
                    w_q: torch.Tensor, w_k: torch.Tensor, w_v: torch.Tensor) -> torch.Tensor:
    """Single-head scaled dot-product attention over a conditioning sequence.

    tokens: (n, d_x) query source; cond: (m, d_e); w_q: (d, d_x),
    w_k/w_v: (d, d_e). Returns Softmax(Q K^T / sqrt(d)) V with Q = tokens w_q^T,
    K = cond w_k^T, V = cond w_v^T.
    """
    if w_q.shape[1] != tokens.shape[-1]:
        raise ValueError(f"w_q maps dim {w_q.shape[1]}, tokens have dim {tokens.shape[-1]}")
    if w_k.shape[1] != cond.shape[-1] or w_v.shape[1] != cond.shape[-1]:
        raise ValueError("w_k/w_v input dim must match the conditioning dim")
    d = w_q.shape[0]
    q = tokens @ w_q.T
    k = cond @ w_k.T
    v = cond @ w_v.T
    attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(d), dim=-1)
    return attn @ v


class CrossAttention(nn.Module):
    """Multi-head version used inside the U-Net."""

    def __init__(self, dim, cond_dim, heads):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"heads {heads} must divide dim {dim}")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.to_q = nn.Linear(dim, dim, bias=False)
        self.to_k = nn.Linear(cond_dim, dim, bias=False)
        self.to_v = nn.Linear(cond_dim, dim, bias=False)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, cond):
        # x: (k, n, dim); cond: (k, m, cond_dim)
        k_, n, dim = x.shape
        h = self.heads
        q = self.to_q(x).reshape(k_, n, h, dim // h).transpose(1, 2)
        key = self.to_k(cond).reshape(k_, -1, h, dim // h).transpose(1, 2)
        val = self.to_v(cond).reshape(k_, -1, h, dim // h).transpose(1, 2)
        attn = torch.softmax(q @ key.transpose(-2, -1) * self.scale, dim=-1)
        out = (attn @ val).transpose(1, 2).reshape(k_, n, dim)
        return self.proj(out)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, (k,) -> (k, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.double()[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, time_dim):
        super().__init__()
        self.norm1 = nn.GroupNorm(math.gcd(8, in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(math.gcd(8, out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x, temb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class AttnBlock(nn.Module):
    """Self-attention + cross-attention over flattened feature maps."""

    def __init__(self, ch, cond_dim, heads):
        super().__init__()
        self.norm_self = nn.LayerNorm(ch)
        self.self_attn = nn.MultiheadAttention(ch, heads, batch_first=True)
        self.norm_cross = nn.LayerNorm(ch)
        self.cross_attn = CrossAttention(ch, cond_dim, heads)

    def forward(self, x, cond):
        k, c, hh, ww = x.shape
        tokens = x.reshape(k, c, hh * ww).transpose(1, 2)
        h = self.norm_self(tokens)
        tokens = tokens + self.self_attn(h, h, h, need_weights=False)[0]
        tokens = tokens + self.cross_attn(self.norm_cross(tokens), cond)
        return tokens.transpose(1, 2).reshape(k, c, hh, ww)


class Upsample(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.conv = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class UNet(nn.Module):
    def __init__(self, config: UNetConfig = None):
        super().__init__()
        self.config = config or UNetConfig()
        self.config.validate()
        cfg = self.config
        torch.manual_seed(cfg.seed)
        base = cfg.base_channels
        time_dim = base * 4
        self.time_mlp = nn.Sequential(
            nn.Linear(base, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim))
        self.stem = nn.Conv2d(cfg.in_channels, base, 3, padding=1)

        chans = [base * m for m in cfg.channel_mults]
        levels = len(chans)
        res_per_level = [cfg.image_size // (2 ** i) for i in range(levels)]

        self.down_blocks = nn.ModuleList()
        self.down_attns = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        ch = base
        skip_chans = []
        for level, out_ch in enumerate(chans):
            self.down_blocks.append(ResBlock(ch, out_ch, time_dim))
            self.down_attns.append(
                AttnBlock(out_ch, cfg.cond_dim, cfg.heads)
                if res_per_level[level] in cfg.attention_resolutions else None)
            ch = out_ch
            skip_chans.append(ch)
            self.downsamples.append(
                nn.Conv2d(ch, ch, 3, stride=2, padding=1) if level < levels - 1 else None)

        self.mid_block1 = ResBlock(ch, ch, time_dim)
        self.mid_attn = AttnBlock(ch, cfg.cond_dim, cfg.heads)
        self.mid_block2 = ResBlock(ch, ch, time_dim)

        self.up_blocks = nn.ModuleList()
        self.up_attns = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level in reversed(range(levels)):
            out_ch = chans[max(level - 1, 0)]
            self.up_blocks.append(ResBlock(ch + skip_chans.pop(), out_ch, time_dim))
            self.up_attns.append(
                AttnBlock(out_ch, cfg.cond_dim, cfg.heads)
                if res_per_level[level] in cfg.attention_resolutions else None)
            ch = out_ch
            self.upsamples.append(Upsample(ch) if level > 0 else None)

        self.out_norm = nn.GroupNorm(math.gcd(8, ch), ch)
        self.out_conv = nn.Conv2d(ch, cfg.out_channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
        if x.shape[-1] != cfg.image_size or x.shape[-2] != cfg.image_size:
            raise ValueError(f"expected {cfg.image_size}x{cfg.image_size} inputs, "
                             f"got {tuple(x.shape[-2:])}")
        if cond.shape[-1] != cfg.cond_dim:
            raise ValueError(f"expected conditioning dim {cfg.cond_dim}, got {cond.shape[-1]}")
        if cond.ndim == 2:
            cond = cond[None].expand(x.shape[0], -1, -1)
        temb = self.time_mlp(timestep_embedding(t, cfg.base_channels).to(x.dtype))

        h = self.stem(x)
        skips = []
        for block, attn, down in zip(self.down_blocks, self.down_attns, self.downsamples):
            h = block(h, temb)
            if attn is not None:
                h = attn(h, cond)
            skips.append(h)
            if down is not None:
                h = down(h)

        h = self.mid_block1(h, temb)
        h = self.mid_attn(h, cond)
        h = self.mid_block2(h, temb)

        for block, attn, up in zip(self.up_blocks, self.up_attns, self.upsamples):
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
            if attn is not None:
                h = attn(h, cond)
            if up is not None:
                h = up(h)

        return self.out_conv(self.act(self.out_norm(h)))


def unet_forward(unet: UNet, x_t: torch.Tensor, background: torch.Tensor,
                 mask: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
    """Stack [blended x_t, background, mask] and predict the noise."""
    if x_t.shape != background.shape:
        raise ValueError(f"x_t {tuple(x_t.shape)} and background {tuple(background.shape)} differ")
    if mask.shape[-2:] != x_t.shape[-2:]:
        raise ValueError("mask spatial size must match the images")
    return unet(torch.cat([x_t, background, mask], dim=1), t, cond)
