"""File formats: binary PGM label images, PNG feature images, embedding dumps, JSON."""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .embedding import EmbeddingField
from .geometry import Ellipse, dumps_ellipses, loads_ellipses
from .labelgen import LabelImage


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a P5 PGM; 16-bit big-endian samples when any value exceeds 255."""
    px = np.asarray(pixels)
    if px.ndim != 2 or px.size and (px.min() < 0 or px.max() > 65535):
        raise ValueError("PGM needs a 2-D array with values in [0, 65535]")
    maxval = 255 if px.size == 0 or px.max() <= 255 else 65535
    data = px.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    header = f"P5\n{px.shape[1]} {px.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + data)


_PGM_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if not m:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    dtype = ">u2" if maxval > 255 else np.uint8
    n = w * h * (2 if maxval > 255 else 1)
    body = raw[m.end():m.end() + n]
    if len(body) != n:
        raise ValueError(f"{path}: truncated PGM data")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(np.int32)


def write_label(path, li: LabelImage) -> None:
    write_pgm(path, li.pixels)


def read_label(path, kind: str) -> LabelImage:
    return LabelImage(read_pgm(path), kind)


def write_features(path, features: np.ndarray) -> None:
    """Save features in [0, 1] as 8-bit grayscale (1 channel) or RGB (3 channels) PNG."""
    f = np.asarray(features, dtype=float)
    q = np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8)
    if q.ndim == 3 and q.shape[2] == 1:
        q = q[..., 0]
    Image.fromarray(q).save(path, format="PNG")


def read_features(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=float) / 255.0
    return arr if arr.ndim == 3 else arr[..., None]


def write_embedding(path, f: EmbeddingField) -> None:
    """Row-major little-endian float32, pixel-major then channel, plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(f.vectors, dtype="<f4").tobytes())
    sidecar = {"width": f.width, "height": f.height, "dim": f.dim}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def read_embedding(path) -> EmbeddingField:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    return EmbeddingField(data.reshape(meta["height"], meta["width"], meta["dim"]).astype(float))


def write_ellipses(path, ellipses) -> None:
    Path(path).write_text(dumps_ellipses(ellipses) + "\n")


def read_ellipses(path) -> list[Ellipse]:
    return loads_ellipses(Path(path).read_text())


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())
