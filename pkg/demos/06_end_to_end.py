"""Generate a small suite, segment it in all three modes and score it.

Same flow as the command line tool: generate, segment, evaluate.
"""
import tempfile
from pathlib import Path

from ellipseg.metrics import aggregate
from ellipseg.pipeline import PipelineConfig, evaluate_scene, segment_scene
from ellipseg.scenegen import generate_suite, load_scene, read_manifest, suite_specs

out = Path(tempfile.mkdtemp()) / "suite"
specs = suite_specs(4, seed=11, n_animals=(3, 5), width=96, height=96, a_range=(11, 15), b_range=(5, 8))
generate_suite(specs, out)
names = [s["name"] for s in read_manifest(out)["scenes"]]
print(f"generated {len(names)} scenes in {out}")

cfg = PipelineConfig(min_cluster_size=30, steps=300)
for mode in ("categorical", "combined", "bodypart"):
    reports = []
    for name in names:
        data = load_scene(out, name)
        pred = segment_scene(data, mode, cfg)
        reports.append(evaluate_scene(pred, data, mode, cfg)["ellipses"])
    r = aggregate(reports, "micro")
    orient = "" if r.orientation_accuracy is None else f"  orientation {r.orientation_accuracy:.3f}"
    print(f"{mode:12s} PQ {r.pq:.3f}  F1 {r.f1:.3f}  TP {r.tp} FP {r.fp} FN {r.fn}{orient}")
