"""End-to-end processing of a generated dataset: segment scenes, then evaluate them.

Three segmentation modes are supported:

``categorical``
    core blobs of a categorical3 prediction are fitted and scaled up.
``combined``
    per-image embedding -> clustering under a binary mask -> one ellipse per cluster.
``bodypart``
    like ``combined`` with a bodypart3 prediction as the mask; the head class
    then picks the head side of every fitted ellipse.

Without a network, the semantic prediction is either the ground-truth label
(optionally corrupted by random pixel flips and boundary erosion) or the output
of a per-pixel classifier fitted on the scene's own features.
"""
from __future__ import annotations

import csv
import io as _io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io
from .clustering import ClusterParams, cluster_masked_embedding
from .embedding import DiscriminativeParams, OptimizerSettings, PixelClassifier, optimize_embedding
from .geometry import Grid, raster_mask
from .labelgen import (BACKGROUND, HEAD, LabelImage, ellipses_from_categorical,
                       extract_gt_ellipses, fit_instances, resolve_head_side)
from .metrics import (EvalReport, MatchResult, aggregate, ellipse_match, jaccard_accuracy, make_report,
                      match_segments, orientation_counts)
from .scenegen import load_scene, read_manifest

log = logging.getLogger(__name__)

MODES = ("categorical", "combined", "bodypart")
SEMANTIC_KIND = {"categorical": "categorical3", "combined": "binary", "bodypart": "bodypart3"}
SEMANTIC_LABEL = {"categorical": "categorical", "combined": "binary", "bodypart": "bodypart"}


@dataclass(frozen=True)
class PipelineConfig:
    dim: int = 8
    delta_v: float = 0.1
    delta_d: float = 1.5
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.001
    include_background: bool = True
    steps: int = 500
    lr: float = 1e-4
    seed: int = 0
    min_cluster_size: int = 100
    min_samples: int = 10
    metric: str = "euclidean"
    core_factor: float = 0.5
    head_fraction: float = 0.3
    min_pixels: int = 10
    threshold: float = 0.5
    prediction: str = "label"  # label | classifier
    flip_rate: float = 0.0
    erosion: int = 0
    classifier_steps: int = 300
    averaging: str = "micro"  # micro | macro
    jaccard_background: bool = False

    def __post_init__(self):
        if self.prediction not in ("label", "classifier"):
            raise ValueError("prediction must be 'label' or 'classifier'")
        if self.averaging not in ("micro", "macro"):
            raise ValueError("averaging must be 'micro' or 'macro'")
        if not 0 <= self.flip_rate <= 1:
            raise ValueError("flip_rate must lie in [0, 1]")
        # validate nested parameter groups early
        self.discriminative()
        self.clustering()

    def discriminative(self) -> DiscriminativeParams:
        return DiscriminativeParams(self.delta_v, self.delta_d, self.alpha, self.beta, self.gamma)

    def optimizer(self) -> OptimizerSettings:
        return OptimizerSettings(steps=self.steps, lr=self.lr, seed=self.seed, dim=self.dim)

    def clustering(self) -> ClusterParams:
        return ClusterParams(self.min_cluster_size, self.min_samples, self.metric)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)


def corrupt_labels(li: LabelImage, flip_rate: float, erosion: int, seed: int) -> LabelImage:
    """Erode every non-background class region, then flip random pixels to another class."""
    px = li.pixels.copy()
    if erosion > 0:
        for c in np.unique(px):
            if c == BACKGROUND:
                continue
            region = px == c
            px[region & ~ndimage.binary_erosion(region, iterations=erosion)] = BACKGROUND
    if flip_rate > 0:
        rng = np.random.default_rng(seed)
        n_classes = {"binary": 2}.get(li.kind, 3)
        flip = rng.random(px.shape) < flip_rate
        shift = rng.integers(1, n_classes, size=px.shape)
        px[flip] = (px[flip] + shift[flip]) % n_classes
    return LabelImage(px, li.kind)


def semantic_prediction(data: dict, mode: str, cfg: PipelineConfig) -> LabelImage:
    gt = data[SEMANTIC_LABEL[mode]]
    if cfg.prediction == "classifier":
        n_classes = 2 if gt.kind == "binary" else 3
        clf = PixelClassifier(n_classes, steps=cfg.classifier_steps, seed=cfg.seed)
        clf.fit(data["features"], gt)
        return LabelImage(clf.predict(data["features"], cfg.threshold), gt.kind)
    if cfg.flip_rate or cfg.erosion:
        return corrupt_labels(gt, cfg.flip_rate, cfg.erosion, cfg.seed)
    return gt


def paint_ellipses(ellipses, shape) -> LabelImage:
    out = np.zeros(shape, dtype=np.int32)
    for k, e in enumerate(ellipses):
        out[raster_mask(e, shape)] = k + 1
    return LabelImage(out, "instance")


def segment_scene(data: dict, mode: str, cfg: PipelineConfig) -> dict:
    """Predicted ellipses, instance image and semantic image for one loaded scene."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    semantic = semantic_prediction(data, mode, cfg)
    shape = semantic.shape
    if mode == "categorical":
        ellipses = ellipses_from_categorical(semantic, cfg.core_factor, cfg.min_pixels)
        return {"ellipses": ellipses, "instance": paint_ellipses(ellipses, shape),
                "semantic": semantic}

    result = optimize_embedding(data["features"], data["instance"], cfg.discriminative(),
                                cfg.optimizer(), cfg.include_background)
    inst = cluster_masked_embedding(result.field, semantic.collapse(), cfg.clustering())
    fitted, _ = fit_instances(inst, cfg.min_pixels)
    ellipses = []
    for k, e in sorted(fitted.items()):
        if mode == "bodypart":
            e = resolve_head_side(e, (semantic.pixels == HEAD) & (inst.pixels == k))
        ellipses.append(e)
    return {"ellipses": ellipses, "instance": inst, "semantic": semantic,
            "losses": result.losses}


def evaluate_scene(pred: dict, data: dict, mode: str, cfg: PipelineConfig) -> dict:
    """Ellipse-level and pixel-segment-level reports for one scene."""
    gt_inst = data["instance"]
    gt_ellipses = extract_gt_ellipses(gt_inst, data["scene"].ellipses)
    m = ellipse_match(pred["ellipses"], gt_ellipses, Grid.from_shape(gt_inst.shape))

    jac = None
    if pred.get("semantic") is not None:
        gt_sem = data[SEMANTIC_LABEL[mode]]
        jac = jaccard_accuracy(pred["semantic"], gt_sem, gt_sem.kind, cfg.jaccard_background)
    orient = None
    if mode == "bodypart":
        # a TP whose head side could not be resolved counts as wrong
        known = [t for t in m.tp_pairs if pred["ellipses"][t[0]].head_sign != 0]
        correct, _ = orientation_counts(pred["ellipses"], gt_ellipses, MatchResult(known))
        orient = (correct, m.n_tp)
    report = make_report(m, jac, orient)

    seg = None
    if pred.get("instance") is not None:
        seg = make_report(match_segments(pred["instance"], gt_inst))
    return {"ellipses": report, "segments": seg}


# --------------------------------------------------------------------------
# batch drivers (used by the CLI)

def _segment_job(args):
    dataset_dir, name, mode, cfg_dict, out_dir = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    try:
        data = load_scene(dataset_dir, name)
        pred = segment_scene(data, mode, cfg)
    except Exception as exc:  # reported per scene, the batch goes on
        return name, type(exc).__name__, str(exc)
    d = Path(out_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    io.write_ellipses(d / "ellipses.json", pred["ellipses"])
    io.write_label(d / "instance.pgm", pred["instance"])
    io.write_label(d / f"{SEMANTIC_LABEL[mode]}.pgm", pred["semantic"])
    return name, None, None


def _map(fn, jobs, n_workers):
    if n_workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, jobs))


def segment_dataset(dataset_dir, out_dir, mode: str, cfg: PipelineConfig, jobs: int = 1) -> list:
    """Segment every scene in the manifest; returns a list of (scene, error type, message)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    manifest = read_manifest(dataset_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [s["name"] for s in manifest["scenes"]]
    results = _map(_segment_job, [(str(dataset_dir), n, mode, cfg.to_dict(), str(out))
                                  for n in names], jobs)
    failures = [r for r in results if r[1] is not None]
    for name, kind, msg in failures:
        log.error("%s: %s: %s", name, kind, msg)
    io.dump_json(out / "manifest.json", {"mode": mode, "scenes": names,
                                         "failures": [list(f) for f in failures]})
    io.dump_json(out / "effective-config.json", cfg.to_dict())
    return failures


def load_prediction(pred_dir, name: str, mode: str) -> dict:
    d = Path(pred_dir) / name
    pred = {"ellipses": [], "instance": None, "semantic": None}
    if (d / "ellipses.json").exists():
        pred["ellipses"] = io.read_ellipses(d / "ellipses.json")
    if (d / "instance.pgm").exists():
        pred["instance"] = io.read_label(d / "instance.pgm", "instance")
    sem = d / f"{SEMANTIC_LABEL[mode]}.pgm"
    if sem.exists():
        pred["semantic"] = io.read_label(sem, SEMANTIC_KIND[mode])
    return pred


def _evaluate_job(args):
    pred_dir, dataset_dir, name, mode, cfg_dict = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    data = load_scene(dataset_dir, name)
    pred = load_prediction(pred_dir, name, mode)
    return evaluate_scene(pred, data, mode, cfg)


class ManifestMismatch(ValueError):
    pass


CSV_FIELDS = ("scene", "pq", "f1", "precision", "recall", "jaccard_accuracy",
              "orientation_accuracy", "tp", "fp", "fn", "segment_pq", "segment_f1")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def evaluate_dataset(pred_dir, dataset_dir, out_dir, cfg: PipelineConfig,
                     mode: str | None = None, jobs: int = 1) -> EvalReport:
    """Write ``<scene>.json`` per scene, ``aggregate.json`` and ``summary.csv``."""
    manifest = read_manifest(dataset_dir)
    names = [s["name"] for s in manifest["scenes"]]
    pred_manifest = Path(pred_dir) / "manifest.json"
    if pred_manifest.exists():
        pm = io.load_json(pred_manifest)
        if pm["scenes"] != names:
            raise ManifestMismatch("prediction and dataset manifests list different scenes")
        mode = mode or pm["mode"]
    mode = mode or "combined"
    results = _map(_evaluate_job, [(str(pred_dir), str(dataset_dir), n, mode, cfg.to_dict())
                                   for n in names], jobs)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for name, res in zip(names, results):
        ell, seg = res["ellipses"], res["segments"]
        io.dump_json(out / f"{name}.json", {
            "scene": name, "mode": mode, "ellipses": ell.to_dict(),
            "segments": seg.to_dict() if seg else None})
        writer.writerow([name] + [_fmt(getattr(ell, k)) for k in CSV_FIELDS[1:10]]
                        + [_fmt(seg.pq if seg else None), _fmt(seg.f1 if seg else None)])
    (out / "summary.csv").write_text(buf.getvalue())

    agg = aggregate([r["ellipses"] for r in results], cfg.averaging)
    segs = [r["segments"] for r in results if r["segments"] is not None]
    io.dump_json(out / "aggregate.json", {
        "mode": mode, "averaging": cfg.averaging, "n_scenes": len(names),
        "ellipses": agg.to_dict(),
        "segments": aggregate(segs, cfg.averaging).to_dict() if segs else None})
    io.dump_json(out / "effective-config.json", cfg.to_dict())
    return agg
