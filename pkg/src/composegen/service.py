"""Annotation HTTP service: asset catalogs, copy-paste previews, records.

The preview endpoint is pure copy-and-paste (no generation); generation is
triggered separately by exporting annotations as composite requests and
feeding them to the `composite` command.
"""

import io
import json
import logging
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import Response
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

ASSET_KINDS = {"object": "objects", "background": "backgrounds"}


class AnnotationIn(BaseModel):
    object_id: str
    background_id: str
    bbox: list[float] = Field(min_length=4, max_length=4)  # [x, y, w, h]
    scale: float = Field(gt=0)


class AssetStore:
    def __init__(self, root):
        self.root = Path(root)

    def list(self, kind: str):
        if kind not in ASSET_KINDS:
            raise HTTPException(status_code=422, detail=f"kind must be one of {sorted(ASSET_KINDS)}")
        directory = self.root / ASSET_KINDS[kind]
        entries = []
        if not directory.is_dir():
            return entries
        for path in sorted(directory.iterdir()):
            if not path.is_file():
                continue
            try:
                with Image.open(path) as im:
                    width, height = im.size
            except UnidentifiedImageError:
                logger.warning("skipping non-image asset %s", path)
                continue
            entries.append({
                "id": path.stem,
                "kind": kind,
                "width": width,
                "height": height,
                "thumbnail_path": f"/assets/{path.stem}/image",
            })
        return sorted(entries, key=lambda e: e["id"])

    def path_for(self, asset_id: str) -> Path:
        for sub in ASSET_KINDS.values():
            directory = self.root / sub
            if not directory.is_dir():
                continue
            for path in sorted(directory.iterdir()):
                if path.is_file() and path.stem == asset_id:
                    return path
        raise HTTPException(status_code=404, detail=f"unknown asset id {asset_id!r}")

    def load(self, asset_id: str, mode: str) -> np.ndarray:
        path = self.path_for(asset_id)
        try:
            return np.asarray(Image.open(path).convert(mode))
        except UnidentifiedImageError:
            raise HTTPException(status_code=404, detail=f"asset {asset_id!r} is not an image")


class AnnotationStore:
    """Append-only JSONL persistence; writes serialized through one lock."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def create(self, record: dict) -> dict:
        record = {"id": uuid.uuid4().hex, **record,
                  "created_at": datetime.now(timezone.utc).isoformat()}
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
                fh.flush()
        return record

    def list(self) -> list:
        if not self.path.exists():
            return []
        with open(self.path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


def paste_preview(background: np.ndarray, object_rgba: np.ndarray, bbox) -> np.ndarray:
    """Alpha-composite the object into bbox with an aspect-preserving resize,
    centered in the box. Pure copy-paste; the oracle for the preview API."""
    x, y, w, h = (int(round(v)) for v in bbox)
    oh, ow = object_rgba.shape[:2]
    ratio = min(w / ow, h / oh)
    new_w, new_h = max(1, int(round(ow * ratio))), max(1, int(round(oh * ratio)))
    resized = np.asarray(
        Image.fromarray(object_rgba, mode="RGBA").resize((new_w, new_h), Image.BILINEAR),
        dtype=np.float64)
    out = background.astype(np.float64).copy()
    ox = x + (w - new_w) // 2
    oy = y + (h - new_h) // 2
    alpha = resized[..., 3:4] / 255.0
    region = out[oy:oy + new_h, ox:ox + new_w]
    out[oy:oy + new_h, ox:ox + new_w] = region * (1.0 - alpha) + resized[..., :3] * alpha
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def _check_bbox(bbox, background_shape):
    x, y, w, h = bbox
    errors = []
    if w <= 0:
        errors.append("bbox.w must be > 0")
    if h <= 0:
        errors.append("bbox.h must be > 0")
    bh, bw = background_shape[:2]
    if not (0 <= x and x + w <= bw):
        errors.append(f"bbox.x range [{x}, {x + w}] outside background width {bw}")
    if not (0 <= y and y + h <= bh):
        errors.append(f"bbox.y range [{y}, {y + h}] outside background height {bh}")
    if errors:
        raise HTTPException(status_code=400, detail="; ".join(errors))


def create_app(assets_dir="assets", annotations_path="annotations.jsonl") -> FastAPI:
    app = FastAPI(title="composegen annotation service")
    assets = AssetStore(assets_dir)
    annotations = AnnotationStore(annotations_path)

    @app.get("/assets")
    def list_assets(kind: str = Query(...)):
        return assets.list(kind)

    @app.get("/assets/{asset_id}/image")
    def asset_image(asset_id: str):
        path = assets.path_for(asset_id)
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/preview")
    def preview(object: str = Query(...), background: str = Query(...),
                bbox: str = Query(...)):
        try:
            box = [float(v) for v in bbox.split(",")]
            if len(box) != 4:
                raise ValueError
        except ValueError:
            raise HTTPException(status_code=400, detail="bbox must be x,y,w,h")
        bg = assets.load(background, "RGB")
        obj = assets.load(object, "RGBA")
        _check_bbox(box, bg.shape)
        out = paste_preview(bg, obj, box)
        buf = io.BytesIO()
        Image.fromarray(out).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/annotations", status_code=201)
    def create_annotation(body: AnnotationIn):
        bg = assets.load(body.background_id, "RGB")
        assets.path_for(body.object_id)
        _check_bbox(body.bbox, bg.shape)
        return annotations.create(body.model_dump())

    @app.get("/annotations")
    def list_annotations():
        return annotations.list()

    @app.get("/annotations/export")
    def export_requests():
        requests = []
        for rec in annotations.list():
            obj_path = assets.path_for(rec["object_id"])
            bg_path = assets.path_for(rec["background_id"])
            requests.append({
                "background": str(bg_path),
                "object": str(obj_path),
                "bbox": [float(v) for v in rec["bbox"]],
                "steps": 100,
                "seed": 0,
                "annotation_id": rec["id"],
            })
        return requests

    return app
