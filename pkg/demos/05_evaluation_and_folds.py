"""
Scoring detections and splitting a dataset
==========================================
"""

import numpy as np

from rgbd_perception import (
    DatasetIndex, Detection, GroundTruthScene, LabelMap,
    location_f1, mean_average_precision, pixel_f1, stratified_folds,
)

gts = {
    "shelf_a": GroundTruthScene([(0, (10, 10, 40, 30)), (1, (70, 20, 20, 40))]),
    "shelf_b": GroundTruthScene([(1, (5, 5, 30, 30))]),
}
dets = {
    "shelf_a": [Detection(0, 0.9, (12, 11, 38, 30)), Detection(2, 0.8, (0, 0, 20, 20))],
    "shelf_b": [Detection(1, 0.7, (6, 4, 30, 31)), Detection(0, 0.95, (50, 50, 10, 10))],
}
for informed in (False, True):
    m, per = mean_average_precision(dets, gts, informed=informed)
    print(f"mAP {'informed' if informed else 'uninformed'}: {m:.3f}  per class {per}")
print("location P/R/F1 for class 0 on shelf_a:", location_f1(dets["shelf_a"], gts["shelf_a"], 0))

gt = np.zeros((10, 10), int)
gt[:, 5:] = 1
pred = gt.copy()
pred[:, 5] = 0
print(f"pixel mean F1: {pixel_f1(LabelMap(pred), LabelMap(gt), 2).mean_f1:.3f}")

index = DatasetIndex([(f"scene{i}", labels) for i, labels in enumerate(
    [{"cup", "book"}, {"cup"}, {"book"}, {"cup", "tape"}, {"tape"}, {"book", "tape"}, {"cup"}, {"book"}])])
folds = stratified_folds(index, k=2, seed=0)
for f in range(2):
    members = [s for s, j in folds.items() if j == f]
    print(f"fold {f}: {members}")
