"""
Filling sparse depth with a guide image
=======================================

Only 8% of the pixels carry depth. The densifier fills the rest while the
color image tells it where depth edges may sit.
"""

import numpy as np

from rgbd_perception import ColorImage, DepthMap, TgvConfig, WeightMap, densify

H, W = 80, 100
v, u = np.mgrid[0:H, 0:W]
truth = np.where(u < 50, 1.0 + 0.002 * v, 1.4)  # slanted plane next to a flat one
gray = np.where(u < 50, 40, 210).astype(np.uint8)
guide = ColorImage(np.repeat(gray[..., None], 3, axis=-1))

mask = np.random.default_rng(1).random((H, W)) < 0.08
sparse = DepthMap(np.where(mask, truth, 0.0), mask)
weights = WeightMap(mask.astype(float))

res = densify(sparse, weights, guide, TgvConfig(max_iters=800, data_scale=100.0))
err = np.abs(res.depth.values - truth)
print(f"iterations: {res.iterations_run}")
print(f"mean abs error: {err.mean() * 1000:.2f} mm, near the edge: {err[:, 45:55].mean() * 1000:.2f} mm")
for it, e in res.energy_trace[:: max(1, len(res.energy_trace) // 5)]:
    print(f"  iteration {it:4d}  energy {e:.4f}")
