"""k-means with elbow selection: the WCSS curve on three well-separated blobs."""

import numpy as np

from augloop import kmeans, select_k_elbow

rng = np.random.default_rng(0)
centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
points = np.vstack([rng.normal(c, 0.1, size=(20, 2)) for c in centers])

print("WCSS by k (5 seeded k-means++ restarts per k):")
curve = {}
for k in range(2, 11):
    result = kmeans(points, k, seed=7)
    curve[k] = result.wcss
    bar = "#" * max(1, int(result.wcss / 8))
    print(f"  k={k:2d}  wcss={result.wcss:10.4f}  {bar}")

chosen = select_k_elbow(points, 2, 10, seed=7)
print(f"\nelbow method chooses k = {chosen}")

best = kmeans(points, chosen, seed=7)
print("cluster sizes:", [best.assignments.count(c) for c in range(chosen)])
print("per-iteration WCSS trace (monotone non-increasing):")
print("  ", [round(w, 4) for w in best.history])
