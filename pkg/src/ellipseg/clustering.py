"""Density-based hierarchical clustering (HDBSCAN) of embedded pixels.

Pipeline: core distances -> mutual reachability -> minimum spanning tree ->
single-linkage hierarchy -> condensed tree (min cluster size) -> flat clusters
by excess-of-mass stability.

Edges of equal weight are merged as one group, so a level at which several
components join at once becomes a single multi-way node. This makes the result
independent of input order without any edge tie-breaking.

Flat extraction may select the root, so a set that forms one dense cluster
(e.g. a single animal) is returned as one cluster rather than as noise.
Points that fall out of a selected cluster (or one of its descendants) carry
that cluster's label; only points that leave unselected ancestors are noise.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .labelgen import LabelImage

NOISE = -1
METRICS = {"euclidean": 2, "manhattan": 1}


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = 100
    min_samples: int = 10
    metric: str = "euclidean"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {sorted(METRICS)}")


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # -1 noise, 0..K-1 clusters
    point_index: np.ndarray | None = None  # (n, 2) pixel (x, y) per point, if any

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def n_noise(self) -> int:
        return int(np.count_nonzero(self.labels == NOISE))


def core_distances(points: np.ndarray, min_samples: int, metric: str = "euclidean") -> np.ndarray:
    """Distance to the ``min_samples``-th nearest point, the point itself counted first."""
    n = len(points)
    k = min(min_samples, n)
    if k <= 1:
        return np.zeros(n)
    d, _ = cKDTree(points).query(points, k=k, p=METRICS[metric])
    return d[:, -1]


def _pair_distance(points, i, metric):
    diff = points - points[i]
    if metric == "manhattan":
        return np.abs(diff).sum(axis=1)
    return np.sqrt((diff * diff).sum(axis=1))


def mutual_reachability_mst(points: np.ndarray, core: np.ndarray,
                            metric: str = "euclidean") -> np.ndarray:
    """Prim's MST on the complete mutual-reachability graph; rows (i, j, weight).

    Distances are computed one row at a time, so memory stays O(n).
    """
    n = len(points)
    if n < 2:
        return np.zeros((0, 3))
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.int64)
    edges = np.zeros((n - 1, 3))
    current = 0
    in_tree[0] = True
    for k in range(n - 1):
        d = np.maximum(_pair_distance(points, current, metric), core)
        d = np.maximum(d, core[current])
        upd = (~in_tree) & (d < best)
        best[upd] = d[upd]
        parent[upd] = current
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        edges[k] = (parent[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        current = nxt
    return edges


class _Node:
    __slots__ = ("distance", "children", "size", "point")

    def __init__(self, distance, children, size, point=-1):
        self.distance = distance
        self.children = children
        self.size = size
        self.point = point


def single_linkage_tree(n: int, edges: np.ndarray) -> _Node:
    """Multi-way single-linkage hierarchy; equal-weight edges merge in one step."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    node_of = [_Node(0.0, [], 1, i) for i in range(n)]
    if n == 1:
        return node_of[0]
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    edges = edges[order]
    k = 0
    while k < len(edges):
        w = edges[k, 2]
        groups: dict[int, list[_Node]] = {}
        while k < len(edges) and edges[k, 2] == w:
            ra, rb = find(int(edges[k, 0])), find(int(edges[k, 1]))
            k += 1
            if ra == rb:
                continue
            members = groups.pop(ra, [node_of[ra]]) + groups.pop(rb, [node_of[rb]])
            parent[rb] = ra
            groups[ra] = members
        for root, members in groups.items():
            node_of[root] = _Node(float(w), members, sum(m.size for m in members))
    return node_of[find(0)]


def _leaves(node: _Node) -> list[int]:
    out, stack = [], [node]
    while stack:
        nd = stack.pop()
        if nd.point >= 0:
            out.append(nd.point)
        else:
            stack.extend(nd.children)
    return out


def _lam(d: float) -> float:
    return math.inf if d == 0 else 1.0 / d


def _gain(lam_exit: float, lam_birth: float) -> float:
    return 0.0 if lam_exit == lam_birth else lam_exit - lam_birth


@dataclass
class CondensedTree:
    parent: list[int]  # parent cluster per cluster, -1 for the root
    birth: list[float]  # lambda at which each cluster appears
    stability: list[float]
    point_cluster: np.ndarray  # cluster each point last belonged to, -1 if none
    point_lambda: np.ndarray  # lambda at which it left that cluster


def condense(root: _Node, n: int, min_cluster_size: int) -> CondensedTree:
    point_cluster = np.full(n, -1, dtype=np.int64)
    point_lambda = np.zeros(n)
    parents, births, stab = [], [], []
    if root.size < min_cluster_size:
        return CondensedTree(parents, births, stab, point_cluster, point_lambda)

    def new_cluster(par, birth):
        parents.append(par)
        births.append(birth)
        stab.append(0.0)
        return len(parents) - 1

    def drop(node, cid, lam):
        pts = _leaves(node)
        point_cluster[pts] = cid
        point_lambda[pts] = lam
        stab[cid] += len(pts) * _gain(lam, births[cid])

    stack = [(root, new_cluster(-1, 0.0))]
    while stack:
        node, cid = stack.pop()
        if node.point >= 0:  # only reachable if min_cluster_size <= 1
            drop(node, cid, math.inf)
            continue
        lam = _lam(node.distance)
        big = [ch for ch in node.children if ch.size >= min_cluster_size]
        for ch in node.children:
            if ch.size < min_cluster_size:
                drop(ch, cid, lam)
        if len(big) == 1:
            stack.append((big[0], cid))
        elif len(big) >= 2:
            for ch in big:
                stab[cid] += ch.size * _gain(lam, births[cid])
                stack.append((ch, new_cluster(cid, lam)))
    return CondensedTree(parents, births, stab, point_cluster, point_lambda)


def select_clusters(tree: CondensedTree) -> list[int]:
    """Excess-of-mass selection; ties keep the parent."""
    m = len(tree.parent)
    children = [[] for _ in range(m)]
    for c, p in enumerate(tree.parent):
        if p >= 0:
            children[p].append(c)
    selected = [False] * m
    best = list(tree.stability)
    # children always have larger ids than their parent
    for c in range(m - 1, -1, -1):
        if not children[c]:
            selected[c] = True
            continue
        sub = sum(best[ch] for ch in children[c])
        if sub > best[c]:
            best[c] = sub
        else:
            selected[c] = True
            stack = list(children[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(children[d])
    return [c for c in range(m) if selected[c]]


def label_points(tree: CondensedTree, selected: list[int]) -> np.ndarray:
    n = len(tree.point_cluster)
    owner = {}
    for c in range(len(tree.parent)):
        a = c
        while a >= 0 and a not in selected:
            a = tree.parent[a]
        owner[c] = a
    raw = np.array([owner.get(int(c), -1) if c >= 0 else -1 for c in tree.point_cluster],
                   dtype=np.int64)
    return relabel_by_first_point(raw) if n else raw


def relabel_by_first_point(raw: np.ndarray) -> np.ndarray:
    """Renumber non-negative labels 0..K-1 in order of their lowest point index."""
    out = np.full(len(raw), NOISE, dtype=np.int64)
    mapping = {}
    for i, r in enumerate(raw):
        if r < 0:
            continue
        if r not in mapping:
            mapping[r] = len(mapping)
        out[i] = mapping[r]
    return out


def hdbscan(points, params: ClusterParams = ClusterParams()) -> ClusterAssignment:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    n = len(pts)
    if n < params.min_cluster_size:
        return ClusterAssignment(np.full(n, NOISE, dtype=np.int64))
    core = core_distances(pts, params.min_samples, params.metric)
    edges = mutual_reachability_mst(pts, core, params.metric)
    root = single_linkage_tree(n, edges)
    tree = condense(root, n, params.min_cluster_size)
    return ClusterAssignment(label_points(tree, select_clusters(tree)))


def cluster_masked_embedding(f, mask, params: ClusterParams = ClusterParams()) -> LabelImage:
    """Cluster the embedding vectors under ``mask``; ids 1..K by decreasing size."""
    vectors = np.asarray(getattr(f, "vectors", f), dtype=float)
    fg = np.asarray(getattr(mask, "pixels", mask)) != 0
    if vectors.shape[:2] != fg.shape:
        raise ValueError("embedding and mask differ in shape")
    out = np.zeros(fg.shape, dtype=np.int32)
    if not fg.any():
        return LabelImage(out, "instance")
    assignment = hdbscan(vectors[fg], params)
    labels = assignment.labels
    k = assignment.n_clusters
    sizes = np.bincount(labels[labels >= 0], minlength=k)
    # stable sort: equal sizes keep first-point order
    order = np.argsort(-sizes, kind="stable")
    new_id = np.zeros(k, dtype=np.int32)
    new_id[order] = np.arange(1, k + 1)
    flat = np.where(labels >= 0, new_id[np.maximum(labels, 0)], 0)
    out[fg] = flat
    return LabelImage(out, "instance")


def assignment_from_image(li: LabelImage, mask) -> ClusterAssignment:
    """Per-point view of a clustered instance image (noise/background -> -1)."""
    fg = np.asarray(getattr(mask, "pixels", mask)) != 0
    rows, cols = np.nonzero(fg)
    return ClusterAssignment(li.pixels[fg].astype(np.int64) - 1,
                             np.column_stack([cols, rows]))


def assignment_to_csv(a: ClusterAssignment) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pixel_x", "pixel_y", "label"])
    for (x, y), lab in zip(a.point_index, a.labels):
        w.writerow([int(x), int(y), int(lab)])
    return buf.getvalue()


def assignment_summary(a: ClusterAssignment, params: ClusterParams) -> str:
    return json.dumps({"n_clusters": a.n_clusters, "n_noise": a.n_noise,
                       "min_cluster_size": params.min_cluster_size}, sort_keys=True)
