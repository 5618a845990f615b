"""
Region proposals and HHA from a depth map
=========================================

A box stands on a floor in front of a wall. Connected components over
position, normal and color give proposal boxes; HHA turns depth into three
image-like channels.
"""

import numpy as np

from rgbd_perception import (
    CameraModel, ColorImage, DepthMap, ProposalConfig,
    back_project, connected_components, encode_hha, estimate_normals, extract_boxes,
)

H, W = 120, 160
cam = CameraModel(300.0, 300.0, (W - 1) / 2, (H - 1) / 2, W, H)
z = np.full((H, W), 1.0)
z[40:80, 50:110] = 0.8
depth = DepthMap(z, np.ones((H, W), bool))
rgb = np.full((H, W, 3), 90, np.uint8)
rgb[40:80, 50:110] = (180, 60, 50)

points, valid = back_project(depth, cam)
normals, ok = estimate_normals(depth, cam, window=3)
labeling = connected_components(ColorImage(rgb), points, normals, valid=valid & ok)
print(f"{labeling.region_count} regions")
for box in extract_boxes(labeling, ProposalConfig(min_area_frac=0.05)):
    print("  proposal", box.box)

hha = encode_hha(depth, cam, normals, ok).values
print("HHA at the box center:", hha[60, 80], " on the wall:", hha[10, 10])
