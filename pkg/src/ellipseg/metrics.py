"""Segment matching, panoptic quality, detection scores, Jaccard and orientation accuracy.

Undefined ratios (empty denominators) are returned as ``None`` and serialized
as JSON ``null``; they are never replaced by 0 or 1.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Ellipse, Grid, raster_mask


@dataclass
class MatchResult:
    tp_pairs: list[tuple[int, int, float]] = field(default_factory=list)
    fp_ids: list[int] = field(default_factory=list)
    fn_ids: list[int] = field(default_factory=list)

    @property
    def n_tp(self) -> int:
        return len(self.tp_pairs)

    @property
    def n_fp(self) -> int:
        return len(self.fp_ids)

    @property
    def n_fn(self) -> int:
        return len(self.fn_ids)

    @property
    def iou_sum(self) -> float:
        return float(sum(p[2] for p in self.tp_pairs))


def _pixels(li):
    return np.asarray(getattr(li, "pixels", li))


def segment_ious(pred, gt) -> dict[tuple[int, int], float]:
    """IoU of every overlapping (pred id, gt id) pair; label 0 is background."""
    p, g = _pixels(pred), _pixels(gt)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch {p.shape} vs {g.shape}")
    p_ids, p_counts = np.unique(p[p != 0], return_counts=True)
    g_ids, g_counts = np.unique(g[g != 0], return_counts=True)
    p_area = dict(zip(p_ids.tolist(), p_counts.tolist()))
    g_area = dict(zip(g_ids.tolist(), g_counts.tolist()))
    both = (p != 0) & (g != 0)
    pairs, inter = np.unique(np.stack([p[both], g[both]]), axis=1, return_counts=True)
    out = {}
    for (pi, gi), n in zip(pairs.T.tolist(), inter.tolist()):
        out[(pi, gi)] = n / (p_area[pi] + g_area[gi] - n)
    return out


def match_segments(pred, gt) -> MatchResult:
    """Match non-overlapping segments; a pair is a TP iff IoU > 0.5 strictly."""
    p, g = _pixels(pred), _pixels(gt)
    ious = segment_ious(p, g)
    tp = sorted((pi, gi, iou) for (pi, gi), iou in ious.items() if iou > 0.5)
    used_p = [t[0] for t in tp]
    used_g = [t[1] for t in tp]
    # with pixel partitions IoU > 0.5 is unique on both sides
    assert len(set(used_p)) == len(used_p) and len(set(used_g)) == len(used_g)
    p_ids = sorted(set(np.unique(p).tolist()) - {0})
    g_ids = sorted(set(np.unique(g).tolist()) - {0})
    return MatchResult(tp, [i for i in p_ids if i not in set(used_p)],
                       [i for i in g_ids if i not in set(used_g)])


def panoptic_quality(m: MatchResult) -> float | None:
    denom = m.n_tp + 0.5 * m.n_fp + 0.5 * m.n_fn
    if denom == 0:
        return None
    return m.iou_sum / denom


def _ratio(num, den):
    return None if den == 0 else num / den


def detection_scores(m: MatchResult) -> tuple[float | None, float | None, float | None]:
    """(precision, recall, f1) from the same TP/FP/FN used by PQ."""
    precision = _ratio(m.n_tp, m.n_tp + m.n_fp)
    recall = _ratio(m.n_tp, m.n_tp + m.n_fn)
    f1 = _ratio(2 * m.n_tp, 2 * m.n_tp + m.n_fp + m.n_fn)
    return precision, recall, f1


def jaccard_accuracy(pred, gt, kind: str | None = None, include_background: bool = False):
    """Foreground IoU for binary images, mean per-class IoU for categorical ones.

    Classes whose union is empty are skipped; if none remain the result is None.
    """
    p, g = _pixels(pred), _pixels(gt)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch {p.shape} vs {g.shape}")
    kind = kind or getattr(gt, "kind", "binary")
    if kind == "binary":
        classes = [1]
        p, g = p != 0, g != 0
        p, g = p.astype(int), g.astype(int)
    else:
        classes = sorted(set(np.unique(p).tolist()) | set(np.unique(g).tolist()))
        if not include_background:
            classes = [c for c in classes if c != 0]
    scores = []
    for c in classes:
        union = np.count_nonzero((p == c) | (g == c))
        if union == 0:
            continue
        scores.append(np.count_nonzero((p == c) & (g == c)) / union)
    return float(np.mean(scores)) if scores else None


def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def orientation_counts(pred: Sequence[Ellipse], gt: Sequence[Ellipse], m: MatchResult):
    """(correct, total) over TP pairs; correct means headings differ by < 90 degrees."""
    correct = 0
    for pi, gi, _ in m.tp_pairs:
        dp, dg = pred[pi].direction, gt[gi].direction
        if dp is None or dg is None:
            raise ValueError(f"TP pair ({pi}, {gi}) has an unknown head side")
        correct += _angle_gap(dp, dg) < math.pi / 2
    return int(correct), m.n_tp


def orientation_accuracy(pred: Sequence[Ellipse], gt: Sequence[Ellipse], m: MatchResult):
    correct, total = orientation_counts(pred, gt, m)
    return _ratio(correct, total)


def ellipse_match(pred: Sequence[Ellipse], gt: Sequence[Ellipse], grid) -> MatchResult:
    """Greedy one-to-one matching of ellipses by decreasing raster IoU (> 0.5).

    Ids are list indices. Ellipse rasters may overlap, so uniqueness is enforced
    by the greedy rule rather than guaranteed; equal IoUs fall back to index order.
    """
    if not isinstance(grid, Grid):
        grid = Grid.from_shape(grid)
    pm = [raster_mask(e, grid) for e in pred]
    gm = [raster_mask(e, grid) for e in gt]
    cands = []
    for i, a in enumerate(pm):
        na = np.count_nonzero(a)
        for j, b in enumerate(gm):
            inter = np.count_nonzero(a & b)
            if inter == 0:
                continue
            iou = inter / (na + np.count_nonzero(b) - inter)
            if iou > 0.5:
                cands.append((-iou, i, j))
    cands.sort()
    used_p, used_g, tp = set(), set(), []
    for neg, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        tp.append((i, j, -neg))
    return MatchResult(tp, [i for i in range(len(pred)) if i not in used_p],
                       [j for j in range(len(gt)) if j not in used_g])


@dataclass
class EvalReport:
    pq: float | None
    f1: float | None
    precision: float | None
    recall: float | None
    tp: int
    fp: int
    fn: int
    iou_sum: float
    jaccard_accuracy: float | None = None
    orientation_accuracy: float | None = None
    orientation_correct: int = 0
    orientation_total: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def make_report(m: MatchResult, jaccard=None, orientation: tuple[int, int] | None = None) -> EvalReport:
    precision, recall, f1 = detection_scores(m)
    correct, total = orientation or (0, 0)
    return EvalReport(panoptic_quality(m), f1, precision, recall, m.n_tp, m.n_fp, m.n_fn,
                      m.iou_sum, jaccard, _ratio(correct, total) if orientation else None,
                      correct, total)


def aggregate(reports: Sequence[EvalReport], mode: str = "micro") -> EvalReport:
    """Combine per-image reports.

    ``micro`` pools TP/FP/FN, IoU sums and orientation counts before computing
    ratios; ``macro`` averages each per-image value, skipping undefined ones.
    Jaccard accuracy is always the mean of the defined per-image values.
    """
    def mean_defined(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    iou_sum = float(sum(r.iou_sum for r in reports))
    o_correct = sum(r.orientation_correct for r in reports)
    o_total = sum(r.orientation_total for r in reports)
    jac = mean_defined([r.jaccard_accuracy for r in reports])
    if mode == "micro":
        precision, recall, f1 = (_ratio(tp, tp + fp), _ratio(tp, tp + fn),
                                 _ratio(2 * tp, 2 * tp + fp + fn))
        pq = _ratio(iou_sum, tp + 0.5 * fp + 0.5 * fn)
        orient = _ratio(o_correct, o_total)
    elif mode == "macro":
        pq = mean_defined([r.pq for r in reports])
        f1 = mean_defined([r.f1 for r in reports])
        precision = mean_defined([r.precision for r in reports])
        recall = mean_defined([r.recall for r in reports])
        orient = mean_defined([r.orientation_accuracy for r in reports])
    else:
        raise ValueError(f"unknown averaging mode {mode!r}")
    return EvalReport(pq, f1, precision, recall, tp, fp, fn, iou_sum, jac, orient,
                      o_correct, o_total)
