"""
Fusing three depth sources
==========================

Two RGB-D sensors and a noisy stereo source look at the same wall. One
RGB-D sensor has a band of bad readings. Fusion averages sources that
agree and drops pixels where they disagree by more than 5 cm.
"""

import numpy as np

from rgbd_perception import DepthMap, FusionConfig, fuse

rng = np.random.default_rng(0)
H, W = 60, 80
wall = np.full((H, W), 1.4)

rgbd_a = wall + rng.normal(0, 0.002, (H, W))
rgbd_b = wall + rng.normal(0, 0.002, (H, W))
rgbd_b[:, 30:40] += 0.08  # the bad band
stereo = wall + rng.normal(0, 0.01, (H, W))

sources = []
for d, dropout in ((rgbd_a, 0.15), (rgbd_b, 0.15), (stereo, 0.3)):
    valid = rng.random((H, W)) > dropout
    sources.append(DepthMap(np.where(valid, d, 0.0), valid))

# default weights favor the RGB-D sensors over stereo
depth, weight = fuse(sources, FusionConfig())

band = np.zeros((H, W), bool)
band[:, 30:40] = True
m = band & depth.valid
print(f"valid after fusion: {depth.valid.mean():.1%}")
print(f"bad sensor error in band: {np.abs(sources[1].values - wall)[band & sources[1].valid].mean() * 1000:.1f} mm")
print(f"fused error in band:      {np.abs(depth.values - wall)[m].mean() * 1000:.1f} mm")
print(f"mean weight outside band: {weight.values[~band & depth.valid].mean():.4f}")
