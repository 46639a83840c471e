"""Triplet dataset persistence: manifest.jsonl + lossless PNGs.

Layout: one directory holding ``manifest.jsonl`` (one JSON record per
triplet) and per-triplet image files. Coordinates are pixel units, origin
top-left, x rightward, y downward. Round-trips losslessly.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from composegen.datagen.triplets import TrainingTriplet


class ManifestError(ValueError):
    """Malformed manifest line; message carries the 1-based line number."""


def write_dataset(triplets, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    records = []
    for i, t in enumerate(triplets):
        t.validate()
        obj_rel = f"{i:06d}_object.png"
        bg_rel = f"{i:06d}_background.png"
        mask_rel = f"{i:06d}_mask.png"
        Image.fromarray(t.object_image, mode="RGBA").save(path / obj_rel)
        Image.fromarray(t.background_image, mode="RGB").save(path / bg_rel)
        Image.fromarray(t.mask * 255, mode="L").save(path / mask_rel)
        records.append({
            "id": i,
            "object": obj_rel,
            "background": bg_rel,
            "mask": mask_rel,
            "caption": t.caption,
            "bbox": list(t.bbox),
        })
    with open(path / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


def read_dataset(path) -> list:
    path = Path(path)
    manifest = path / "manifest.jsonl"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.jsonl under {path}")
    triplets = []
    with open(manifest) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                obj = np.asarray(Image.open(path / rec["object"]).convert("RGBA"))
                bg = np.asarray(Image.open(path / rec["background"]).convert("RGB"))
                mask = (np.asarray(Image.open(path / rec["mask"]).convert("L")) > 127).astype(np.uint8)
                triplets.append(TrainingTriplet(
                    object_image=obj,
                    background_image=bg,
                    mask=mask,
                    caption=rec["caption"],
                    bbox=tuple(float(v) for v in rec["bbox"]),
                ))
            except (json.JSONDecodeError, KeyError, FileNotFoundError) as exc:
                raise ManifestError(f"manifest line {lineno}: {exc}") from exc
    return triplets
