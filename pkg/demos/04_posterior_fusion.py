"""
Letting detections sharpen a segmentation
=========================================

A segmentation that is unsure between two classes meets a confident
detection. The combined posterior follows the detection inside its box and
keeps the segmentation's choice elsewhere.
"""

import numpy as np

from rgbd_perception import Detection, ProbabilityMap, argmax_labels, combine, render_detection_map

H, W = 20, 30
seg = np.zeros((2, H, W))
seg[0], seg[1] = 0.55, 0.45
p_seg = ProbabilityMap(seg)

dets = [Detection(1, 0.9, (8, 5, 12, 10))]
for mode in ("gaussian", "box"):
    p_det = render_detection_map(dets, 2, W, H, mode=mode)
    labels = argmax_labels(combine(p_seg, p_det)).values
    print(f"{mode:8s}: {int((labels == 1).sum())} pixels switch to class 1")
    print("\n".join("  " + "".join(".#"[x] for x in row) for row in labels[3:17:2]))
