"""Snapshots of the embedding space while the per-image optimizer runs.

For every requested step a scatter plot of the foreground pixel embeddings
(coloured by ground-truth animal) and the clustering of that snapshot are
written. Embeddings with more than two dimensions are shown on their first two
axes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402
from .clustering import ClusterParams, cluster_masked_embedding  # noqa: E402
from .embedding import DiscriminativeParams, OptimizerSettings, optimize_embedding  # noqa: E402


def cluster_spreads(vectors: np.ndarray, inst: np.ndarray) -> dict[int, float]:
    """Mean L1 distance of each animal's embeddings to their mean."""
    out = {}
    for k in np.unique(inst):
        if k == 0:
            continue
        v = vectors[inst == k]
        out[int(k)] = float(np.abs(v - v.mean(axis=0)).sum(axis=1).mean())
    return out


def _scatter(path, vectors, inst, step):
    fg = inst > 0
    fig, ax = plt.subplots(figsize=(4, 4), dpi=100)
    ax.scatter(vectors[fg, 0], vectors[fg, 1], c=inst[fg], cmap="tab10", s=2,
               vmin=1, vmax=max(int(inst.max()), 1))
    ax.set_title(f"after {step} updates")
    ax.set_xlabel("embedding axis 0")
    ax.set_ylabel("embedding axis 1")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def embed_demo(features, inst, mask, out_dir, steps=(1, 2, 3, 10, 80),
               params: DiscriminativeParams = DiscriminativeParams(),
               opt: OptimizerSettings = OptimizerSettings(),
               cluster: ClusterParams = ClusterParams(),
               include_background: bool = True) -> dict:
    """Run the optimizer up to ``max(steps)`` and write one snapshot pair per step.

    Returns ``{step: {"scatter": path, "clusters": path, "spread": {...}}}``.
    """
    inst_px = np.asarray(getattr(inst, "pixels", inst))
    steps = sorted(set(int(s) for s in steps))
    run = OptimizerSettings(steps=max(steps), lr=opt.lr, seed=opt.seed, dim=opt.dim,
                            init_scale=opt.init_scale)
    result = optimize_embedding(features, inst, params, run, include_background, steps)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for s in steps:
        v = result.snapshots[s]
        scatter = out / f"embedding_step{s:04d}.png"
        clusters = out / f"clusters_step{s:04d}.pgm"
        _scatter(scatter, v, inst_px, s)
        io.write_label(clusters, cluster_masked_embedding(v, mask, cluster))
        summary[s] = {"scatter": scatter.name, "clusters": clusters.name,
                      "spread": cluster_spreads(v, inst_px)}
    io.dump_json(out / "snapshots.json", {str(k): v for k, v in summary.items()})
    return summary
