"""Run orchestration: config, staged training, evaluation, stress protocol."""

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from composegen.adaptor import AdaptorConfig, ContentAdaptor, train_stage1, train_stage2
from composegen.common import TrainSchedule, state_to_arrays, arrays_to_state
from composegen.datagen import (
    AugmentationSpec,
    PerturbationSpec,
    SceneSpec,
    UnsatisfiableSceneError,
    generate_scene,
    make_training_triplet,
    read_dataset,
    write_dataset,
)
from composegen.embio import CheckpointError, load_checkpoint, save_checkpoint
from composegen.encoders import EncoderConfig, Encoders
from composegen.generator import (
    BATCH_EVAL_STEPS,
    CompositeRequest,
    DiffusionSchedule,
    UNet,
    UNetConfig,
    sample_composites,
    train_stage3,
)
from composegen.metrics import MetricConfig, clip_image_score, clip_text_score, frechet_feature_distance

STRESS_ROTATION_DEG = 40.0   # large-perturbation stress protocol
STRESS_EVAL_COUNT = 150      # desk-scaled from the 1500-image protocol


class ConfigError(ValueError):
    pass


class OrderingError(RuntimeError):
    """A stage was requested before its upstream checkpoint exists."""


class LockError(RuntimeError):
    pass


_STAGE_FILES = {1: "adaptor.stage1.ckpt", 2: "adaptor.stage2.ckpt", 3: "generator.stage3.ckpt"}
_STAGE_TAGS = {1: "adaptor.stage1", 2: "adaptor.stage2", 3: "generator.stage3"}


@dataclass
class RunConfig:
    out_dir: str = "runs/default"
    dataset_dir: str = "data/train"
    seed: int = 0
    canvas_size: int = 64
    encoder: dict = field(default_factory=dict)
    adaptor: dict = field(default_factory=dict)
    # base 16 keeps a full stage-3 run inside a commodity-CPU time budget
    unet: dict = field(default_factory=lambda: {"base_channels": 16})
    diffusion: dict = field(default_factory=lambda: {
        "timesteps": 1000, "beta_start": 1e-4, "beta_end": 0.02})
    # desk-scale schedules; paper scale was 1e-4/15ep/2048, 2e-5/13ep/512, 4e-5/20ep/576
    stage1: dict = field(default_factory=lambda: {"lr": 1e-3, "steps": 500, "batch_size": 32})
    stage2: dict = field(default_factory=lambda: {"lr": 3e-4, "steps": 1000, "batch_size": 16})
    stage3: dict = field(default_factory=lambda: {"lr": 3e-4, "steps": 2000, "batch_size": 8})
    perturbation: dict = field(default_factory=dict)
    augmentation: dict = field(default_factory=dict)
    datagen: dict = field(default_factory=lambda: {
        "num_triplets": 64, "num_objects": 1, "background_texture": "gradient"})
    eval: dict = field(default_factory=lambda: {
        "steps": BATCH_EVAL_STEPS, "n_stress": STRESS_EVAL_COUNT, "n_eval": 32})

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def override(self, dotted_key: str, value):
        """Set a 'section.key' or top-level key, e.g. 'stage1.lr'."""
        if "." in dotted_key:
            section, key = dotted_key.split(".", 1)
            if not hasattr(self, section):
                raise ConfigError(f"unknown config section {section!r}")
            getattr(self, section)[key] = value
        elif hasattr(self, dotted_key):
            setattr(self, dotted_key, value)
        else:
            raise ConfigError(f"unknown config key {dotted_key!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # config object builders
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**{"seed": self.seed, **self.encoder})

    def adaptor_config(self) -> AdaptorConfig:
        return AdaptorConfig(**{"seed": self.seed, **self.adaptor})

    def unet_config(self) -> UNetConfig:
        enc = self.encoder_config()
        adapt = self.adaptor_config()
        if adapt.in_len != enc.visual_len or adapt.in_dim != enc.visual_dim:
            raise ConfigError(
                f"adaptor input ({adapt.in_len}, {adapt.in_dim}) does not match "
                f"visual encoder output ({enc.visual_len}, {enc.visual_dim})")
        base = {"image_size": self.canvas_size, "cond_dim": adapt.out_dim, "seed": self.seed}
        base.update(self.unet)
        return UNetConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in base.items()})

    def diffusion_schedule(self) -> DiffusionSchedule:
        d = self.diffusion
        return DiffusionSchedule.linear(
            int(d.get("timesteps", 1000)),
            float(d.get("beta_start", 1e-4)), float(d.get("beta_end", 0.02)))

    def perturbation_spec(self, seed: int, rotation_max_deg=None) -> PerturbationSpec:
        kwargs = dict(self.perturbation)
        if rotation_max_deg is not None:
            kwargs["rotation_max_deg"] = rotation_max_deg
        return PerturbationSpec(**{**kwargs, "rng_seed": seed})

    def augmentation_spec(self) -> AugmentationSpec:
        return AugmentationSpec(**self.augmentation)

    def schedule(self, stage: int) -> TrainSchedule:
        raw = getattr(self, f"stage{stage}")
        return TrainSchedule(lr=float(raw["lr"]), steps=int(raw["steps"]),
                             batch_size=int(raw["batch_size"]),
                             seed=int(raw.get("seed", self.seed)))


class run_lock:
    """Rejects concurrent writers to one output directory."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "composegen.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"output directory is locked by {self.path}; "
                            "remove the lock file if no other run is active")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def generate_triplets(config: RunConfig, n: int, seed0: int,
                      rotation_max_deg=None) -> list:
    """Seed-deterministic triplet synthesis; unsatisfiable scenes are skipped."""
    dg = config.datagen
    triplets = []
    seed = seed0
    while len(triplets) < n:
        spec = SceneSpec(canvas_size=config.canvas_size,
                         num_objects=int(dg.get("num_objects", 1)),
                         background_texture=dg.get("background_texture", "gradient"),
                         rng_seed=seed)
        seed += 1
        try:
            scene = generate_scene(spec)
            pert = config.perturbation_spec(seed=seed0 + 7919 * len(triplets),
                                            rotation_max_deg=rotation_max_deg)
            triplets.append(make_training_triplet(scene, 0, pert))
        except (UnsatisfiableSceneError, ValueError):
            continue
        if seed - seed0 > 20 * n + 100:
            raise RuntimeError(f"could not synthesize {n} triplets (got {len(triplets)})")
    return triplets


def run_datagen(config: RunConfig) -> Path:
    n = int(config.datagen.get("num_triplets", 64))
    triplets = generate_triplets(config, n, seed0=config.seed)
    return write_dataset(triplets, config.dataset_dir)


def _write_curve(path, curve):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(curve):
            writer.writerow([i, f"{loss:.10f}"])


def _require_checkpoint(out_dir: Path, stage: int):
    path = out_dir / _STAGE_FILES[stage]
    if not path.exists():
        raise OrderingError(
            f"stage {stage} checkpoint missing ({path}); run `train --stage {stage}` first")
    meta, tensors = load_checkpoint(path)
    if meta["stage"] != _STAGE_TAGS[stage]:
        raise OrderingError(f"checkpoint {path} carries tag {meta['stage']!r}, "
                            f"expected {_STAGE_TAGS[stage]!r}")
    return meta, tensors


def _stage1_pairs(triplets):
    return [(np.asarray(t.background_image, dtype=np.float64) / 255.0, t.caption)
            for t in triplets]


def run_stage(stage: int, config: RunConfig) -> Path:
    """Train one stage, write its checkpoint and loss-curve CSV."""
    if stage not in (1, 2, 3):
        raise ConfigError(f"stage must be 1, 2 or 3, got {stage}")
    out_dir = Path(config.out_dir)
    with run_lock(out_dir):
        triplets = read_dataset(config.dataset_dir)
        if not triplets:
            raise ConfigError(f"dataset {config.dataset_dir} is empty")
        encoders = Encoders(config.encoder_config())
        adaptor = ContentAdaptor(config.adaptor_config())
        schedule = config.schedule(stage)
        diffusion = config.diffusion_schedule()

        if stage == 1:
            adaptor, curve = train_stage1(_stage1_pairs(triplets), encoders, adaptor, schedule)
            tensors, tag = state_to_arrays(adaptor), _STAGE_TAGS[1]
        elif stage == 2:
            _, arrays = _require_checkpoint(out_dir, 1)
            arrays_to_state(adaptor, arrays)
            unet = UNet(config.unet_config())
            adaptor, curve = train_stage2(triplets, encoders, adaptor, unet, diffusion, schedule)
            tensors, tag = state_to_arrays(adaptor), _STAGE_TAGS[2]
        else:
            _, arrays = _require_checkpoint(out_dir, 2)
            arrays_to_state(adaptor, arrays)
            unet = UNet(config.unet_config())
            unet, curve = train_stage3(triplets, encoders, adaptor, unet, schedule,
                                       diffusion, aug_spec=config.augmentation_spec())
            tensors, tag = state_to_arrays(unet), _STAGE_TAGS[3]

        ckpt = save_checkpoint(out_dir / _STAGE_FILES[stage], tag, tensors,
                               config=config.to_dict(), step=schedule.steps,
                               seed=schedule.seed,
                               extra={"final_loss": curve[-1]})
        _write_curve(out_dir / f"stage{stage}_loss.csv", curve)
    return ckpt


def load_trained(config: RunConfig):
    """(encoders, adaptor, unet) from the stage-2/3 checkpoints in out_dir."""
    out_dir = Path(config.out_dir)
    encoders = Encoders(config.encoder_config())
    adaptor = ContentAdaptor(config.adaptor_config())
    _, arrays = _require_checkpoint(out_dir, 2)
    arrays_to_state(adaptor, arrays)
    unet = UNet(config.unet_config())
    _, arrays = _require_checkpoint(out_dir, 3)
    arrays_to_state(unet, arrays)
    return encoders, adaptor, unet


def inflated_square_bbox(mask: np.ndarray):
    """Mask hole bbox inflated to a square, clipped to the canvas."""
    ys, xs = np.nonzero(mask == 0)
    if len(ys) == 0:
        raise ValueError("mask has no hole")
    x0, x1 = xs.min(), xs.max() + 1
    y0, y1 = ys.min(), ys.max() + 1
    side = max(x1 - x0, y1 - y0)
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    size = mask.shape[0]
    x0 = int(np.clip(round(cx - side / 2), 0, size - side))
    y0 = int(np.clip(round(cy - side / 2), 0, size - side))
    return x0, y0, side, side


def _metric_report(preds, triplets, metric_config):
    gts = [t.background_image for t in triplets]
    captions = [t.caption for t in triplets]
    f = metric_config.feature_fn

    def crop(img, t):
        x, y, w, h = inflated_square_bbox(t.mask)
        return img[y:y + h, x:x + w]

    report = {}
    for variant in ("full", "crop"):
        if variant == "full":
            p_imgs, g_imgs = preds, gts
        else:
            p_imgs = [crop(p, t) for p, t in zip(preds, triplets)]
            g_imgs = [crop(g, t) for g, t in zip(gts, triplets)]
        feats_p = np.stack([f(im / 255.0) for im in p_imgs])
        feats_g = np.stack([f(im / 255.0) for im in g_imgs])
        report[f"frechet_{variant}"] = frechet_feature_distance(feats_p, feats_g)
        report[f"clip_image_{variant}"] = clip_image_score(
            [im / 255.0 for im in p_imgs], [im / 255.0 for im in g_imgs], metric_config)
        report[f"clip_text_{variant}"] = clip_text_score(
            [im / 255.0 for im in p_imgs], captions, metric_config)
    return report


def _composites_for(triplets, encoders, adaptor, unet, diffusion, steps, seed0,
                    batch_size=25):
    requests = [CompositeRequest(background=t.background_image, mask=t.mask,
                                 object_image=t.object_image, steps=steps, seed=seed0 + i)
                for i, t in enumerate(triplets)]
    preds = []
    for start in range(0, len(requests), batch_size):
        preds.extend(sample_composites(requests[start:start + batch_size],
                                       encoders, adaptor, unet, diffusion))
    return preds


def evaluate(config: RunConfig, n: int = None, seed0: int = None) -> dict:
    """Metric report on a held-out set with train-time perturbation settings."""
    n = n or int(config.eval.get("n_eval", 32))
    seed0 = seed0 if seed0 is not None else config.seed + 100000
    encoders, adaptor, unet = load_trained(config)
    diffusion = config.diffusion_schedule()
    steps = int(config.eval.get("steps", BATCH_EVAL_STEPS))
    triplets = generate_triplets(config, n, seed0=seed0)
    preds = _composites_for(triplets, encoders, adaptor, unet, diffusion, steps, seed0)
    report = _metric_report(preds, triplets, MetricConfig.from_encoders(encoders))
    report.update({"n": n, "steps": steps,
                   "checkpoints": {s: _STAGE_FILES[s] for s in (2, 3)},
                   "config": config.to_dict()})
    return report


def stress_eval(config: RunConfig, n: int = None, seed0: int = None,
                models=None) -> dict:
    """Large-rotation stress protocol: held-out set perturbed at 40 degrees.

    Reports the three metrics in full-image and cropped-to-generated-region
    variants (6 scalars).
    """
    n = n or int(config.eval.get("n_stress", STRESS_EVAL_COUNT))
    seed0 = seed0 if seed0 is not None else config.seed + 200000
    if models is None:
        encoders, adaptor, unet = load_trained(config)
    else:
        encoders, adaptor, unet = models
    diffusion = config.diffusion_schedule()
    steps = int(config.eval.get("steps", BATCH_EVAL_STEPS))
    triplets = generate_triplets(config, n, seed0=seed0,
                                 rotation_max_deg=STRESS_ROTATION_DEG)
    preds = _composites_for(triplets, encoders, adaptor, unet, diffusion, steps, seed0)
    report = _metric_report(preds, triplets, MetricConfig.from_encoders(encoders))
    report.update({"n": n, "steps": steps, "rotation_max_deg": STRESS_ROTATION_DEG})
    return report


def write_report(report: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=str)
    return path
