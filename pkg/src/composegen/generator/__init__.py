from composegen.generator.schedule import DiffusionSchedule, q_sample
from composegen.generator.unet import (
    UNetConfig,
    UNet,
    CrossAttention,
    cross_attention,
    unet_forward,
)
from composegen.generator.training import diffusion_loss, loss_gen, prepare_batch, train_stage3
from composegen.generator.sampling import (
    BATCH_EVAL_STEPS,
    SHOWCASE_STEPS,
    CompositeRequest,
    blend,
    sample_composite,
    sample_composites,
)

__all__ = [
    "DiffusionSchedule",
    "q_sample",
    "UNetConfig",
    "UNet",
    "CrossAttention",
    "cross_attention",
    "unet_forward",
    "diffusion_loss",
    "loss_gen",
    "prepare_batch",
    "train_stage3",
    "CompositeRequest",
    "blend",
    "sample_composite",
]
