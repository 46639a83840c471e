"""Binary embedding cache and checkpoint archive formats.

Embedding file: magic b"EMB1", three uint32 little-endian (batch k, length L,
dim d), then k*L*d float32 little-endian values in row-major order.

Checkpoint: a zip archive with ``metadata.json`` (config echo, stage tag,
step count, seed, per-blob shapes) plus one ``<name>.bin`` raw blob per
weight tensor in the same float32 little-endian row-major layout.
"""

import json
import struct
import zipfile
from pathlib import Path

import numpy as np

EMB_MAGIC = b"EMB1"

STAGE_TAGS = ("adaptor.stage1", "adaptor.stage2", "generator.stage3")


class CheckpointError(ValueError):
    pass


def write_embeddings(path, array: np.ndarray):
    """Write a (k, L, d) float array; (L, d) is promoted to k=1."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (k, L, d) array, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<III", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {EMB_MAGIC!r}")
        k, l, d = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != k * l * d:
        raise ValueError(f"truncated embedding file: expected {k * l * d} floats, got {data.size}")
    return data.reshape(k, l, d).astype(np.float32)


def save_checkpoint(path, stage: str, tensors: dict, config: dict,
                    step: int, seed: int, extra: dict = None):
    if stage not in STAGE_TAGS:
        raise CheckpointError(f"unknown stage tag {stage!r}, expected one of {STAGE_TAGS}")
    meta = {
        "stage": stage,
        "step": step,
        "seed": seed,
        "config": config,
        "shapes": {name: list(t.shape) for name, t in tensors.items()},
    }
    if extra:
        meta.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        # fixed timestamps keep equal-content checkpoints byte-identical
        def entry(name):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            return info

        zf.writestr(entry("metadata.json"), json.dumps(meta, indent=2, sort_keys=True))
        for name, tensor in tensors.items():
            blob = np.ascontiguousarray(tensor, dtype="<f4").tobytes(order="C")
            zf.writestr(entry(f"{name}.bin"), blob)
    return path


def load_checkpoint(path):
    """Returns (metadata dict, {name: float32 ndarray})."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("metadata.json"))
        tensors = {}
        for name, shape in meta["shapes"].items():
            data = np.frombuffer(zf.read(f"{name}.bin"), dtype="<f4")
            tensors[name] = data.reshape(shape).copy()
    return meta, tensors
