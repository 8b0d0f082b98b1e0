"""Seeded synthetic pen scenes: ellipse animals over a textured floor.

Each animal gets its own mean color. The third channel brightens linearly along
the directed major axis towards the head, so the head end is recognizable per
pixel while the animal shows no internal appearance step (a hard step would
survive into the optimized embedding as a spurious sub-cluster). Features are
quantized to 8 bits on creation so a scene read back from disk is bit-identical
to the one generated in memory.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .geometry import Ellipse, raster_mask
from .labelgen import Scene, render_all

MAX_ATTEMPTS = 1000
HEAD_RAMP_LOW, HEAD_RAMP_SPAN = 0.3, 0.6


class SceneGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    width: int = 128
    height: int = 128
    n_animals: int = 4
    a_range: tuple[float, float] = (14.0, 20.0)
    b_range: tuple[float, float] = (7.0, 10.0)
    max_overlap: float = 0.15
    seed: int = 0
    noise_sigma: float = 0.02
    texture_amplitude: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "a_range", tuple(float(v) for v in self.a_range))
        object.__setattr__(self, "b_range", tuple(float(v) for v in self.b_range))
        if self.n_animals < 0:
            raise ValueError("n_animals must be >= 0")
        if not (self.a_range[0] <= self.a_range[1] and self.b_range[0] <= self.b_range[1]):
            raise ValueError("axis ranges must be (low, high)")
        if not (self.b_range[0] > 0 and self.a_range[0] >= self.b_range[1]):
            raise ValueError("axis ranges must satisfy a >= b > 0")
        if not 0 <= self.max_overlap < 1:
            raise ValueError("max_overlap must lie in [0, 1)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a_range"] = list(self.a_range)
        d["b_range"] = list(self.b_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene spec field(s): {sorted(unknown)}")
        return cls(**d)


def overlap_fraction(m1: np.ndarray, m2: np.ndarray) -> float:
    """Shared pixels relative to the smaller of the two rasters."""
    small = min(np.count_nonzero(m1), np.count_nonzero(m2))
    return np.count_nonzero(m1 & m2) / small if small else 0.0


def place_ellipses(spec: SceneSpec, rng: np.random.Generator) -> list[Ellipse]:
    shape = (spec.height, spec.width)
    placed, masks = [], []
    for k in range(spec.n_animals):
        for _ in range(MAX_ATTEMPTS):
            a = rng.uniform(*spec.a_range)
            b = rng.uniform(*spec.b_range)
            theta = rng.uniform(0.0, math.pi)
            # keep the whole ellipse inside the image
            hx = math.hypot(a * math.cos(theta), b * math.sin(theta))
            hy = math.hypot(a * math.sin(theta), b * math.cos(theta))
            if 2 * hx >= spec.width - 1 or 2 * hy >= spec.height - 1:
                continue
            cx = rng.uniform(hx, spec.width - 1 - hx)
            cy = rng.uniform(hy, spec.height - 1 - hy)
            e = Ellipse(cx, cy, a, b, theta)
            m = raster_mask(e, shape)
            if all(overlap_fraction(m, o) <= spec.max_overlap for o in masks):
                placed.append(e)
                masks.append(m)
                break
        else:
            raise SceneGenerationError(
                f"could not place animal {k + 1} of {spec.n_animals} within max_overlap="
                f"{spec.max_overlap} after {MAX_ATTEMPTS} attempts")
    depths = rng.permutation(len(placed))
    heads = rng.choice([-1, 1], size=len(placed))
    return [Ellipse(e.cx, e.cy, e.a, e.b, e.theta, int(h), int(d))
            for e, h, d in zip(placed, heads, depths)]


def _texture(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.indices((spec.height, spec.width), dtype=float)
    tex = np.zeros((spec.height, spec.width))
    for _ in range(4):
        fx, fy = rng.uniform(0.02, 0.15, size=2)
        phase = rng.uniform(0, 2 * math.pi)
        tex += np.sin(fx * cols + fy * rows + phase)
    return spec.texture_amplitude * tex / 4.0


def generate_scene(spec: SceneSpec, head_fraction: float = 0.3):
    """Return (Scene, features) with features of shape (height, width, 3) in [0, 1]."""
    rng = np.random.default_rng(spec.seed)
    scene = Scene(spec.width, spec.height, place_ellipses(spec, rng))
    labels = render_all(scene, head_fraction=head_fraction)
    inst = labels["instance"].pixels
    rows, cols = np.indices((spec.height, spec.width), dtype=float)

    feats = np.empty((spec.height, spec.width, 3))
    feats[..., 0] = 0.15 + _texture(spec, rng)
    feats[..., 1] = 0.2 + _texture(spec, rng)
    feats[..., 2] = 0.1
    n = len(scene.ellipses)
    # evenly spaced, shuffled intensities keep every pair of animals distinguishable
    levels = rng.permutation(np.linspace(0.5, 0.95, n)) if n else []
    hues = rng.uniform(0.3, 0.8, size=n)
    for k in range(n):
        sel = inst == k + 1
        feats[sel, 0] = levels[k]
        feats[sel, 1] = hues[k]
        e = scene.ellipses[k]
        proj = ((cols[sel] - e.cx) * math.cos(e.theta)
                + (rows[sel] - e.cy) * math.sin(e.theta)) * e.head_sign / e.a
        feats[sel, 2] = HEAD_RAMP_LOW + HEAD_RAMP_SPAN * (np.clip(proj, -1, 1) + 1) / 2
    feats += rng.normal(0.0, spec.noise_sigma, size=feats.shape)
    feats = np.clip(np.rint(feats * 255.0), 0, 255) / 255.0
    return scene, feats


def suite_specs(count: int, seed: int = 0, n_animals=(3, 6), **template) -> list[SceneSpec]:
    """``count`` specs sharing ``template``, with per-scene seeds and animal counts."""
    rng = np.random.default_rng(seed)
    lo, hi = (n_animals, n_animals) if isinstance(n_animals, int) else n_animals
    return [SceneSpec(n_animals=int(rng.integers(lo, hi + 1)),
                      seed=int(rng.integers(0, 2**31 - 1)), **template)
            for _ in range(count)]


def scene_name(k: int) -> str:
    return f"scene_{k:04d}"


def generate_suite(specs: list[SceneSpec], out_dir, core_factor: float = 0.5,
                   head_fraction: float = 0.3) -> Path:
    """Write scenes, features and all four label images plus ``manifest.json``."""
    if not specs:
        raise ValueError("need at least one scene spec")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, spec in enumerate(specs):
        scene, feats = generate_scene(spec, head_fraction)
        d = out / scene_name(k)
        d.mkdir(exist_ok=True)
        io.write_ellipses(d / "annotations.json", scene.ellipses)
        io.write_features(d / "features.png", feats)
        labels = render_all(scene, core_factor, head_fraction)
        for name, li in labels.items():
            io.write_label(d / f"{name}.pgm", li)
        entries.append({"name": scene_name(k), "spec": spec.to_dict()})
    io.dump_json(out / "manifest.json", {"core_factor": core_factor,
                                         "head_fraction": head_fraction,
                                         "scenes": entries})
    return out


def read_manifest(dataset_dir) -> dict:
    return io.load_json(Path(dataset_dir) / "manifest.json")


def load_scene(dataset_dir, name: str) -> dict:
    """Everything stored for one scene: scene, features and the four label images."""
    d = Path(dataset_dir) / name
    ellipses = io.read_ellipses(d / "annotations.json")
    feats = io.read_features(d / "features.png")
    h, w = feats.shape[:2]
    return {
        "scene": Scene(w, h, ellipses),
        "features": feats,
        "binary": io.read_label(d / "binary.pgm", "binary"),
        "categorical": io.read_label(d / "categorical.pgm", "categorical3"),
        "instance": io.read_label(d / "instance.pgm", "instance"),
        "bodypart": io.read_label(d / "bodypart.pgm", "bodypart3"),
    }
