"""Toy visual and text token encoders.

Small randomly-initialized stand-ins for the two pretrained ViT-L/14 token
encoders: a patch transformer for images and a hash-tokenized embedding
stack for captions. Both are frozen everywhere; training only ever touches
the adaptor and the generator. Default shapes are desk-scale; the paper-scale
shapes (257x1024 visual, 77x768 text) are available via EncoderConfig.paper().
"""

import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from PIL import Image


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    patch_size: int = 8
    visual_dim: int = 64
    visual_depth: int = 2
    visual_depth_keep: int = 1      # half the blocks, trimmed-encoder policy
    text_len: int = 8
    text_dim: int = 48
    vocab_hash_size: int = 256
    seed: int = 0

    def validate(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.visual_depth_keep > self.visual_depth:
            raise ValueError("visual_depth_keep must be <= visual_depth")

    @property
    def visual_len(self) -> int:
        return (self.image_size // self.patch_size) ** 2 + 1  # +1 class token

    @classmethod
    def paper(cls) -> "EncoderConfig":
        return cls(image_size=224, patch_size=14, visual_dim=1024,
                   visual_depth=12, visual_depth_keep=6,
                   text_len=77, text_dim=768, vocab_hash_size=49408)


class TransformerBlock(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 4), nn.GELU(), nn.Linear(dim * 4, dim))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class VisualEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.visual_dim
        patch_pixels = 3 * config.patch_size ** 2
        self.patch_embed = nn.Linear(patch_pixels, d)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.visual_len, d))
        self.blocks = nn.ModuleList(
            TransformerBlock(d, heads=4) for _ in range(config.visual_depth))
        self.norm = nn.LayerNorm(d)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(k, H, W, 3) in [0,1] -> (k, visual_len, visual_dim); only the
        first visual_depth_keep blocks run."""
        cfg = self.config
        if images.shape[1] != cfg.image_size or images.shape[2] != cfg.image_size:
            raise ValueError(
                f"expected {cfg.image_size}x{cfg.image_size} images, got {tuple(images.shape[1:3])}")
        k = images.shape[0]
        p = cfg.patch_size
        n = cfg.image_size // p
        patches = (images.reshape(k, n, p, n, p, 3)
                   .permute(0, 1, 3, 2, 4, 5)
                   .reshape(k, n * n, p * p * 3))
        x = self.patch_embed(patches)
        x = torch.cat([self.cls_token.expand(k, -1, -1), x], dim=1)
        x = x + self.pos_embed
        for block in self.blocks[:cfg.visual_depth_keep]:
            x = block(x)
        return self.norm(x)


def hash_tokenize(caption: str, config: EncoderConfig) -> list:
    """Stable word hashing into vocab buckets; no external vocabulary.

    Bucket 0 is reserved for padding; words land in [1, vocab_hash_size).
    """
    if not caption.strip():
        raise ValueError("caption must be a non-empty string")
    words = caption.lower().split()
    ids = [1 + zlib.crc32(w.encode()) % (config.vocab_hash_size - 1) for w in words]
    return ids[:config.text_len]


class TextEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        d = config.text_dim
        self.token_embed = nn.Embedding(config.vocab_hash_size, d)  # index 0 = pad
        self.pos_embed = nn.Parameter(torch.zeros(1, config.text_len, d))
        self.block = TransformerBlock(d, heads=4)
        self.norm = nn.LayerNorm(d)

    def forward(self, captions) -> torch.Tensor:
        """list[str] -> (k, text_len, text_dim); short captions are padded
        with the learned pad embedding (+ positional encoding)."""
        cfg = self.config
        ids = torch.zeros(len(captions), cfg.text_len, dtype=torch.long)
        for i, caption in enumerate(captions):
            toks = hash_tokenize(caption, cfg)
            ids[i, :len(toks)] = torch.tensor(toks)
        x = self.token_embed(ids) + self.pos_embed
        x = self.block(x)
        return self.norm(x)


class Encoders:
    """Frozen encoder pair with deterministic random initialization."""

    def __init__(self, config: EncoderConfig = None, dtype=torch.float32):
        self.config = config or EncoderConfig()
        self.dtype = dtype
        torch.manual_seed(self.config.seed)
        self.visual = VisualEncoder(self.config).to(dtype)
        self.text = TextEncoder(self.config).to(dtype)
        for p in self.visual.parameters():
            p.requires_grad_(False)
        for p in self.text.parameters():
            p.requires_grad_(False)
        # break the zero init of tokens/positions so embeddings are informative
        gen = torch.Generator().manual_seed(self.config.seed + 1)
        with torch.no_grad():
            for mod in (self.visual, self.text):
                for p in mod.parameters():
                    if p.std() == 0 and p.numel() > 1:
                        p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * 0.02)

    def encode_image(self, images: np.ndarray) -> torch.Tensor:
        """(H, W, 3) or (k, H, W, 3) array in [0,1] -> (k, L, d) embedding."""
        arr = np.asarray(images, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        size = self.config.image_size
        if arr.shape[1] != size or arr.shape[2] != size:
            arr = np.stack([
                np.asarray(Image.fromarray(
                    np.clip(np.round(im * 255), 0, 255).astype(np.uint8)
                ).resize((size, size), Image.BILINEAR), dtype=np.float64) / 255.0
                for im in arr])
        with torch.no_grad():
            return self.visual(torch.from_numpy(arr).to(self.dtype))

    def encode_text(self, captions) -> torch.Tensor:
        if isinstance(captions, str):
            captions = [captions]
        with torch.no_grad():
            return self.text(captions)

    def weight_checksum(self) -> float:
        total = 0.0
        for mod in (self.visual, self.text):
            for p in mod.parameters():
                total += float(p.double().sum())
        return total
