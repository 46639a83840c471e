"""Evaluation: logit-scaled embedding-similarity scores and Fréchet distance.

Feature extractors are pluggable; the defaults use the frozen visual
encoder's class token (L2-normalized) for images and the text encoder's
class position for captions.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from composegen.encoders import Encoders

DEFAULT_LOGIT_SCALE = 100.0
METRIC_SPACE_DIM = 32


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("cannot normalize a zero feature vector")
    return vec / norm


def _projection(in_dim: int, seed: int) -> np.ndarray:
    # fixed random projection head into the shared metric space
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E7219]))
    return rng.normal(size=(METRIC_SPACE_DIM, in_dim)) / np.sqrt(in_dim)


def make_image_feature_fn(encoders: Encoders) -> Callable:
    proj = _projection(encoders.config.visual_dim, encoders.config.seed)

    def feature(image: np.ndarray) -> np.ndarray:
        tokens = encoders.encode_image(image)
        cls = tokens[0, 0].cpu().numpy().astype(np.float64)
        return _normalize(proj @ cls)
    return feature


def make_caption_feature_fn(encoders: Encoders) -> Callable:
    proj = _projection(encoders.config.text_dim, encoders.config.seed + 1)

    def feature(caption: str) -> np.ndarray:
        tokens = encoders.encode_text(caption)
        cls = tokens[0, 0].cpu().numpy().astype(np.float64)
        return _normalize(proj @ cls)
    return feature


@dataclass
class MetricConfig:
    logit_scale: float = DEFAULT_LOGIT_SCALE
    feature_fn: Callable = None
    caption_embed_fn: Callable = None

    @classmethod
    def from_encoders(cls, encoders: Encoders, logit_scale: float = DEFAULT_LOGIT_SCALE):
        return cls(logit_scale=logit_scale,
                   feature_fn=make_image_feature_fn(encoders),
                   caption_embed_fn=make_caption_feature_fn(encoders))


def clip_image_score(pred_images, gt_images, config: MetricConfig) -> float:
    """Batch mean of s * <f(pred), f(gt)>."""
    if len(pred_images) != len(gt_images):
        raise ValueError("pred and gt batches must have equal length")
    f = config.feature_fn
    sims = [float(np.dot(f(p), f(g))) for p, g in zip(pred_images, gt_images)]
    return config.logit_scale * float(np.mean(sims))


def clip_text_score(pred_images, gt_captions, config: MetricConfig) -> float:
    """Batch mean of s * <f(pred), caption_embed(caption)>."""
    if len(pred_images) != len(gt_captions):
        raise ValueError("pred and caption batches must have equal length")
    f, g = config.feature_fn, config.caption_embed_fn
    sims = [float(np.dot(f(p), g(c))) for p, c in zip(pred_images, gt_captions)]
    return config.logit_scale * float(np.mean(sims))


def frechet_feature_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    Covariances use the 1/(n-1) estimator; the matrix square root comes from
    an eigendecomposition with tiny negative eigenvalues clamped to zero.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"feature sets must be (n, d) with equal d, got {a.shape} / {b.shape}")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least 2 samples per set for a covariance")

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    return frechet_from_moments(mu_a, cov_a, mu_b, cov_b)


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    """Fréchet distance between two Gaussians given their exact moments."""
    mu_a, mu_b = np.atleast_1d(mu_a).astype(np.float64), np.atleast_1d(mu_b).astype(np.float64)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(np.float64), np.atleast_2d(cov_b).astype(np.float64)

    # Tr((Sa Sb)^{1/2}) via sqrt(Sa) Sb sqrt(Sa), which is symmetric PSD
    vals_a, vecs_a = np.linalg.eigh((cov_a + cov_a.T) / 2)
    sqrt_a = (vecs_a * np.sqrt(np.clip(vals_a, 0, None))) @ vecs_a.T
    inner = sqrt_a @ cov_b @ sqrt_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2)
    trace_sqrt = float(np.sqrt(np.clip(vals, 0, None)).sum())

    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
