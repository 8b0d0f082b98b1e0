"""Density-based clustering of points and of masked embeddings.

Sparse points in between the dense groups become noise (-1) instead of
being forced into a cluster.
"""
import numpy as np

from ellipseg.clustering import ClusterParams, assignment_summary, hdbscan

rng = np.random.default_rng(0)
blobs = [rng.normal(c, 1.0, (150, 2)) for c in ((0, 0), (12, 0), (6, 10))]
scatter = rng.uniform(-5, 17, (20, 2))
points = np.vstack(blobs + [scatter])

for mcs in (10, 50, 200):
    params = ClusterParams(min_cluster_size=mcs)
    result = hdbscan(points, params)
    print(f"min_cluster_size {mcs:3d}: {result.n_clusters} clusters, {result.n_noise} noise points")

print()
print(assignment_summary(hdbscan(points, ClusterParams(min_cluster_size=50)), ClusterParams(min_cluster_size=50)))
