"""Label images rendered from depth-ordered ellipse annotations, and their inverse.

Four label variants are produced from one scene: binary (pig vs background),
categorical3 (background / outer edge / inner core), instance (one id per
annotated animal, visible pixels only) and bodypart3 (background / body / head).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import HEAD_UNKNOWN, Ellipse, FitError, fit_ellipse, raster_mask, scale

log = logging.getLogger(__name__)

KINDS = ("binary", "categorical3", "instance", "bodypart3")
BACKGROUND = 0
# categorical3
EDGE, CORE = 1, 2
# bodypart3
BODY, HEAD = 1, 2

# 4-connectivity: diagonal neighbours do not join blobs
FOUR_CONNECTIVITY = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class LabelImage:
    pixels: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown label kind {self.kind!r}")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("label image must be 2-D")
        px = px.astype(np.int32, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.kind in ("binary",) and px.size and px.max() > 1:
            raise ValueError("binary labels must be 0 or 1")
        if self.kind in ("categorical3", "bodypart3") and px.size and px.max() > 2:
            raise ValueError(f"{self.kind} labels must be in {{0, 1, 2}}")
        if px.size and px.min() < 0:
            raise ValueError("labels must be non-negative")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def foreground(self) -> np.ndarray:
        return self.pixels != BACKGROUND

    def collapse(self) -> "LabelImage":
        """Binary image of all non-background pixels."""
        return LabelImage(self.foreground().astype(np.int32), "binary")


@dataclass
class Scene:
    width: int
    height: int
    ellipses: list[Ellipse] = field(default_factory=list)

    def __post_init__(self):
        self.ellipses = sorted(self.ellipses, key=lambda e: e.depth)
        depths = [e.depth for e in self.ellipses]
        if len(set(depths)) != len(depths):
            raise ValueError("depth ranks must be unique")
        for e in self.ellipses:
            if not (0 <= e.cx < self.width and 0 <= e.cy < self.height):
                raise ValueError(f"ellipse center ({e.cx}, {e.cy}) outside image")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width


def _paint(scene: Scene, region_fn) -> np.ndarray:
    out = np.zeros(scene.shape, dtype=np.int32)
    for k, e in enumerate(scene.ellipses):
        mask = raster_mask(e, scene.shape)
        out[mask] = region_fn(k, e, mask)[mask]
    return out


def render_binary(scene: Scene) -> LabelImage:
    out = np.zeros(scene.shape, dtype=np.int32)
    for e in scene.ellipses:
        out[raster_mask(e, scene.shape)] = 1
    return LabelImage(out, "binary")


def render_instance(scene: Scene) -> LabelImage:
    """Paint ellipses far-to-near; label k+1 belongs to ``scene.ellipses[k]``."""
    out = np.zeros(scene.shape, dtype=np.int32)
    for k, e in enumerate(scene.ellipses):
        out[raster_mask(e, scene.shape)] = k + 1
    return LabelImage(out, "instance")


def render_categorical(scene: Scene, core_factor: float = 0.5) -> LabelImage:
    if not 0 < core_factor < 1:
        raise ValueError("core_factor must lie in (0, 1)")

    def region(k, e, mask):
        return np.where(raster_mask(scale(e, core_factor), scene.shape), CORE, EDGE)

    return LabelImage(_paint(scene, region), "categorical3")


def head_region(e: Ellipse, shape, head_fraction: float = 0.3) -> np.ndarray:
    """Pixels of ``e`` on the head end: directed major-axis projection > (1 - 2h) a."""
    if e.head_sign == HEAD_UNKNOWN:
        raise ValueError("ellipse has unknown head side")
    rows, cols = np.indices(shape)
    c, s = math.cos(e.theta), math.sin(e.theta)
    proj = ((cols - e.cx) * c + (rows - e.cy) * s) * e.head_sign
    return raster_mask(e, shape) & (proj > (1.0 - 2.0 * head_fraction) * e.a)


def render_bodypart(scene: Scene, head_fraction: float = 0.3) -> LabelImage:
    if not 0 < head_fraction < 1:
        raise ValueError("head_fraction must lie in (0, 1)")
    for e in scene.ellipses:
        if e.head_sign == HEAD_UNKNOWN:
            raise ValueError("every ellipse needs a known head side for bodypart labels")

    def region(k, e, mask):
        return np.where(head_region(e, scene.shape, head_fraction), HEAD, BODY)

    return LabelImage(_paint(scene, region), "bodypart3")


def render_all(scene: Scene, core_factor: float = 0.5, head_fraction: float = 0.3) -> dict:
    return {
        "binary": render_binary(scene),
        "categorical": render_categorical(scene, core_factor),
        "instance": render_instance(scene),
        "bodypart": render_bodypart(scene, head_fraction),
    }


def pixel_coords(mask: np.ndarray) -> np.ndarray:
    """(n, 2) array of (x, y) pixel centers where ``mask`` is set."""
    rows, cols = np.nonzero(mask)
    return np.column_stack([cols, rows]).astype(float)


# The algebraic fit is affine-equivariant, so fitting every pixel of a filled
# ellipse returns the concentric ellipse with axes scaled by 1/sqrt(2).
FILLED_REGION_SCALE = math.sqrt(2.0)


def fit_region(points) -> Ellipse:
    """Ellipse outlining a filled pixel region given as (n, 2) (x, y) centers."""
    return scale(fit_ellipse(points), FILLED_REGION_SCALE)


def orient_like(fitted: Ellipse, reference: Ellipse) -> Ellipse:
    """Give ``fitted`` the head side whose directed axis agrees with ``reference``."""
    if reference.head_sign == HEAD_UNKNOWN:
        return Ellipse(fitted.cx, fitted.cy, fitted.a, fitted.b, fitted.theta,
                       HEAD_UNKNOWN, reference.depth)
    d = reference.direction
    dot = math.cos(fitted.theta) * math.cos(d) + math.sin(fitted.theta) * math.sin(d)
    return Ellipse(fitted.cx, fitted.cy, fitted.a, fitted.b, fitted.theta,
                   1 if dot >= 0 else -1, reference.depth)


def fit_instances(li: LabelImage, min_pixels: int = 6) -> tuple[dict[int, Ellipse], list[int]]:
    """Outline ellipse per instance id. Returns ({id: ellipse}, skipped ids)."""
    fitted, skipped = {}, []
    for k in np.unique(li.pixels):
        if k == BACKGROUND:
            continue
        pts = pixel_coords(li.pixels == k)
        if len(pts) < max(min_pixels, 6):
            skipped.append(int(k))
            continue
        try:
            fitted[int(k)] = fit_region(pts)
        except FitError as exc:
            log.warning("instance %d: %s", k, exc)
            skipped.append(int(k))
    return fitted, skipped


def extract_gt_ellipses(li: LabelImage, annotations: list[Ellipse] | None = None,
                        min_pixels: int = 6) -> list[Ellipse]:
    """Occlusion-adjusted ground truth: one ellipse fitted per visible instance.

    With ``annotations`` (the depth-sorted scene list, instance id k+1 <-> entry k)
    each fitted ellipse inherits depth and head side from its annotation.
    Instances too small to fit are skipped with a log message.
    """
    if li.kind != "instance":
        raise ValueError("expected an instance label image")
    fitted, skipped = fit_instances(li, min_pixels)
    if skipped:
        log.info("skipped %d instance(s) too small or degenerate to fit: %s", len(skipped), skipped)
    out = []
    for k, e in fitted.items():
        if annotations is not None:
            e = orient_like(e, annotations[k - 1])
        out.append(e)
    return out


def blob_search(li: LabelImage, target_class: int) -> list[np.ndarray]:
    """4-connected components of ``target_class`` pixels, as (n, 2) (x, y) arrays."""
    labels, n = ndimage.label(li.pixels == target_class, structure=FOUR_CONNECTIVITY)
    return [pixel_coords(labels == k) for k in range(1, n + 1)]


def ellipses_from_categorical(li: LabelImage, core_factor: float = 0.5,
                              min_pixels: int = 10) -> list[Ellipse]:
    """Fit each inner-core blob and scale the fit back up to the full body."""
    if not 0 < core_factor < 1:
        raise ValueError("core_factor must lie in (0, 1)")
    out, failures = [], 0
    for blob in blob_search(li, CORE):
        if len(blob) < max(min_pixels, 6):
            continue
        try:
            out.append(scale(fit_region(blob), 1.0 / core_factor))
        except FitError:
            failures += 1
    if failures:
        log.info("%d core blob(s) could not be fitted", failures)
    return out


def resolve_head_side(e: Ellipse, head_mask: np.ndarray) -> Ellipse:
    """Pick the head side of ``e`` from predicted head pixels.

    Each head pixel votes with the sign of its projection on the major axis;
    without head pixels the ellipse is returned unchanged.
    """
    pts = pixel_coords(head_mask)
    if len(pts) == 0:
        return e
    proj = (pts[:, 0] - e.cx) * math.cos(e.theta) + (pts[:, 1] - e.cy) * math.sin(e.theta)
    total = proj.sum()
    if total == 0:
        return e
    return Ellipse(e.cx, e.cy, e.a, e.b, e.theta, 1 if total > 0 else -1, e.depth)
