"""Command-line interface.

Exit codes: 0 success, 2 config error, 3 stage-ordering error, 4 runtime
failure.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from composegen.common import NaNLossError
from composegen.datagen.triplets import bbox_mask
from composegen.embio import CheckpointError
from composegen.generator import CompositeRequest, SHOWCASE_STEPS, sample_composite
from composegen.pipeline import (
    ConfigError,
    LockError,
    OrderingError,
    RunConfig,
    load_trained,
    run_datagen,
    run_stage,
    stress_eval,
    evaluate as run_evaluate,
    write_report,
)

EXIT_CONFIG = 2
EXIT_ORDERING = 3
EXIT_RUNTIME = 4


def _load_config(config_path, overrides):
    config = RunConfig.from_file(config_path) if config_path else RunConfig()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config.override(key, value)
    return config


def _run(func):
    try:
        func()
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (OrderingError, CheckpointError) as exc:
        click.echo(f"ordering error: {exc}", err=True)
        sys.exit(EXIT_ORDERING)
    except (LockError, NaNLossError, RuntimeError, OSError) as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@click.group()
def main():
    """Self-supervised generative object compositing."""


config_opt = click.option("--config", "config_path", type=click.Path(exists=True),
                          default=None, help="YAML run config")
set_opt = click.option("--set", "overrides", multiple=True,
                       help="override a config key, e.g. --set stage1.lr=1e-3")


@main.command()
@config_opt
@set_opt
def datagen(config_path, overrides):
    """Synthesize a triplet dataset into dataset_dir."""
    def body():
        config = _load_config(config_path, overrides)
        path = run_datagen(config)
        click.echo(f"wrote dataset to {path}")
    _run(body)


@main.command()
@config_opt
@set_opt
@click.option("--stage", type=click.IntRange(1, 3), required=True)
def train(config_path, overrides, stage):
    """Run one training stage (1: adaptor distance, 2: adaptor diffusion,
    3: generator)."""
    def body():
        config = _load_config(config_path, overrides)
        ckpt = run_stage(stage, config)
        click.echo(f"stage {stage} checkpoint: {ckpt}")
    _run(body)


@main.command()
@config_opt
@set_opt
@click.option("--background", type=click.Path(exists=True))
@click.option("--object", "object_path", type=click.Path(exists=True))
@click.option("--bbox", help="x,y,w,h in background pixels")
@click.option("--mask", "mask_path", type=click.Path(exists=True),
              help="binary mask PNG (alternative to --bbox)")
@click.option("--request", "request_path", type=click.Path(exists=True),
              help="JSON request document (paths + bbox/mask + steps + seed)")
@click.option("--steps", type=int, default=SHOWCASE_STEPS)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", default="composite.png")
def composite(config_path, overrides, background, object_path, bbox, mask_path,
              request_path, steps, seed, out_path):
    """Generate one composite image from trained checkpoints."""
    def body():
        nonlocal background, object_path, bbox, mask_path, steps, seed
        config = _load_config(config_path, overrides)
        if request_path:
            with open(request_path) as fh:
                doc = json.load(fh)
            background = doc.get("background", background)
            object_path = doc.get("object", object_path)
            bbox = doc.get("bbox", bbox)
            mask_path = doc.get("mask", mask_path)
            steps = int(doc.get("steps", steps))
            seed = int(doc.get("seed", seed))
        if not background or not object_path:
            raise ConfigError("need --background and --object (or a --request document)")
        bg = np.asarray(Image.open(background).convert("RGB"))
        obj = np.asarray(Image.open(object_path).convert("RGBA"))
        if mask_path:
            mask = (np.asarray(Image.open(mask_path).convert("L")) > 127).astype(np.uint8)
        elif bbox:
            vals = [float(v) for v in (bbox.split(",") if isinstance(bbox, str) else bbox)]
            if len(vals) != 4:
                raise ConfigError(f"bbox must be x,y,w,h, got {bbox!r}")
            mask = bbox_mask(bg.shape[:2], vals)
        else:
            raise ConfigError("need --bbox or --mask")

        encoders, adaptor, unet = load_trained(config)
        request = CompositeRequest(background=bg, mask=mask, object_image=obj,
                                   steps=steps, seed=seed)
        out = sample_composite(request, encoders, adaptor, unet,
                               config.diffusion_schedule())
        Image.fromarray(out).save(out_path)
        sidecar = {"seed": seed, "steps": steps,
                   "checkpoints": {"adaptor": "adaptor.stage2.ckpt",
                                   "generator": "generator.stage3.ckpt"},
                   "out_dir": config.out_dir}
        Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2))
        click.echo(f"wrote {out_path}")
    _run(body)


@main.command()
@config_opt
@set_opt
@click.option("--n", type=int, default=None)
@click.option("--out", "out_path", default=None)
def evaluate(config_path, overrides, n, out_path):
    """Metric report (JSON) on a held-out synthetic set."""
    def body():
        config = _load_config(config_path, overrides)
        report = run_evaluate(config, n=n)
        dest = out_path or Path(config.out_dir) / "evaluate.json"
        write_report(report, dest)
        click.echo(json.dumps({k: v for k, v in report.items() if k != "config"}, indent=2))
    _run(body)


@main.command("stress-eval")
@config_opt
@set_opt
@click.option("--n", type=int, default=None)
@click.option("--out", "out_path", default=None)
def stress_eval_cmd(config_path, overrides, n, out_path):
    """40-degree rotation stress protocol (full + crop metric variants)."""
    def body():
        config = _load_config(config_path, overrides)
        report = stress_eval(config, n=n)
        dest = out_path or Path(config.out_dir) / "stress_eval.json"
        write_report(report, dest)
        click.echo(json.dumps(report, indent=2))
    _run(body)


@main.command()
@config_opt
@set_opt
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--assets", "assets_dir", type=click.Path(), default="assets")
@click.option("--annotations", "annotations_path", type=click.Path(),
              default="annotations.jsonl")
def serve(config_path, overrides, port, host, assets_dir, annotations_path):
    """Run the annotation HTTP service."""
    def body():
        import uvicorn
        from composegen.service import create_app
        app = create_app(assets_dir, annotations_path)
        uvicorn.run(app, host=host, port=port)
    _run(body)


if __name__ == "__main__":
    main()
