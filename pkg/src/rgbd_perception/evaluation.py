"""Detection and segmentation metrics, feature distillation loss, fold splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core_types import Detection, FeatureMapStack, LabelMap

Box = tuple[float, float, float, float]


class ClassAbsentError(KeyError):
    """The requested class has no ground truth in the scene."""


@dataclass(frozen=True)
class GroundTruthScene:
    boxes: list[tuple[int, Box]] = field(default_factory=list)
    labels: LabelMap | None = None
    candidate_classes: frozenset[int] = frozenset()

    def __post_init__(self):
        boxes = [(int(c), tuple(float(x) for x in b)) for c, b in self.boxes]
        cand = frozenset(int(c) for c in self.candidate_classes) if self.candidate_classes else frozenset(c for c, _ in boxes)
        missing = {c for c, _ in boxes} - cand
        if missing:
            raise ValueError(f"ground-truth classes {sorted(missing)} are not in candidate_classes")
        for c, b in boxes:
            if b[2] <= 0 or b[3] <= 0:
                raise ValueError(f"ground-truth box {b} of class {c} has non-positive extent")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "candidate_classes", cand)


# ---------------------------------------------------------------------------
# boxes


def intersection_area(a: Box, b: Box) -> float:
    w = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    h = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    return w * h if w > 0 and h > 0 else 0.0


def iou(a: Box, b: Box) -> float:
    inter = intersection_area(a, b)
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


def location_f1(dets: Sequence[Detection], gt: GroundTruthScene, class_id: int) -> tuple[float, float, float]:
    """Precision, recall and F1 of the single most confident detection of ``class_id``.

    The detection ``B`` is scored against the same-class ground-truth box
    ``G`` with the highest IoU (lowest index on ties): precision is
    ``IoU(B, G)``, recall ``|B & G| / |G|``.
    """
    gts = [b for c, b in gt.boxes if c == class_id]
    if not gts:
        raise ClassAbsentError(f"class {class_id} has no ground-truth box in this scene")
    cands = [d for d in dets if d.class_id == class_id]
    if not cands:
        return 0.0, 0.0, 0.0
    best = max(cands, key=lambda d: d.confidence)  # first on ties
    ious = [iou(best.box, g) for g in gts]
    g = gts[int(np.argmax(ious))]
    precision = ious[int(np.argmax(ious))]
    recall = intersection_area(best.box, g) / (g[2] * g[3])
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def average_precision(tp: np.ndarray, num_gt: int) -> float:
    """All-point area under the right-to-left running-max precision envelope."""
    if num_gt <= 0:
        raise ValueError("num_gt must be positive")
    if tp.size == 0:
        return 0.0
    tp = tp.astype(np.float64)
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, tp.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


def mean_average_precision(
    dets: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, GroundTruthScene],
    iou_thresh: float = 0.5,
    informed: bool = False,
) -> tuple[float, dict[int, float]]:
    """mAP over classes that have at least one ground-truth box.

    Detections of one class are ranked over the whole dataset by descending
    confidence (ties by scene id, then detection index) and greedily matched
    to the unmatched same-scene ground truth of highest IoU >= ``iou_thresh``.
    With ``informed``, detections of classes not in a scene's candidate set
    are dropped first.
    """
    unknown = set(dets) - set(gts)
    if unknown:
        raise ValueError(f"detections for scenes without ground truth: {sorted(unknown)}")
    num_gt: dict[int, int] = {}
    for scene in gts.values():
        for c, _ in scene.boxes:
            num_gt[c] = num_gt.get(c, 0) + 1
    if not num_gt:
        raise ValueError("ground truth contains no boxes")

    ranked: dict[int, list] = {c: [] for c in num_gt}
    for sid in sorted(dets):
        cand = gts[sid].candidate_classes
        for i, d in enumerate(dets[sid]):
            if informed and d.class_id not in cand:
                continue
            if d.class_id in ranked:
                ranked[d.class_id].append((-d.confidence, sid, i, d))

    per_class = {}
    for c in sorted(num_gt):
        entries = sorted(ranked[c], key=lambda e: e[:3])
        matched = {sid: np.zeros(sum(1 for k, _ in g.boxes if k == c), bool) for sid, g in gts.items()}
        tp = np.zeros(len(entries))
        for n, (_, sid, _, d) in enumerate(entries):
            boxes = [b for k, b in gts[sid].boxes if k == c]
            best, best_iou = -1, iou_thresh
            for j, g in enumerate(boxes):
                if matched[sid][j]:
                    continue
                o = iou(d.box, g)
                if o >= best_iou and (best < 0 or o > best_iou):
                    best, best_iou = j, o
            if best >= 0:
                matched[sid][best] = True
                tp[n] = 1
        per_class[c] = average_precision(tp, num_gt[c])
    return float(np.mean(list(per_class.values()))), per_class


# ---------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class SegmentationScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    present: np.ndarray  # classes with at least one ground-truth pixel
    mean_f1: float


def confusion_matrix(pred: LabelMap, gt: LabelMap, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Confusion counts (rows ground truth, columns prediction) and, per
    ground-truth class, the pixels predicted outside ``[0, num_classes)``.

    Ignore pixels in ``gt`` are skipped.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape}, ground truth {gt.shape}")
    gt.check_classes(num_classes)
    keep = gt.values != gt.ignore
    g = gt.values[keep]
    p = pred.values[keep]
    inside = (p >= 0) & (p < num_classes)
    cm = np.zeros((num_classes, num_classes + 1), np.int64)
    np.add.at(cm, (g, np.where(inside, p, num_classes)), 1)
    return cm[:, :num_classes], cm[:, num_classes]


def _safe_div(a, b):
    return np.where(b > 0, a / np.where(b > 0, b, 1), 0.0)


def pixel_f1(pred: LabelMap, gt: LabelMap, num_classes: int) -> SegmentationScores:
    """Per-class pixel precision/recall/F1 and their mean over classes present in ``gt``."""
    cm, missed = confusion_matrix(pred, gt, num_classes)
    tp = np.diag(cm).astype(np.float64)
    gt_count = cm.sum(axis=1) + missed
    pred_count = cm.sum(axis=0)
    precision = _safe_div(tp, pred_count)
    recall = _safe_div(tp, gt_count)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    present = gt_count > 0
    mean = float(f1[present].mean()) if present.any() else 0.0
    return SegmentationScores(precision, recall, f1, present, mean)


# ---------------------------------------------------------------------------
# feature distillation


def distillation_loss(psi: FeatureMapStack, phi: FeatureMapStack) -> float:
    """Squared L2 distance between a depth network's features and the RGB targets."""
    a = getattr(psi, "values", psi)
    b = getattr(phi, "values", phi)
    if np.shape(a) != np.shape(b):
        raise ValueError(f"feature shapes differ: {np.shape(a)} vs {np.shape(b)}")
    d = np.asarray(a, np.float64) - np.asarray(b, np.float64)
    return float(np.dot(d.ravel(), d.ravel()))


# ---------------------------------------------------------------------------
# iterative stratification


@dataclass(frozen=True)
class DatasetIndex:
    scenes: list[tuple[str, frozenset]]

    def __post_init__(self):
        scenes = [(str(s), frozenset(l)) for s, l in self.scenes]
        if not scenes:
            raise ValueError("dataset index is empty")
        ids = [s for s, _ in scenes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate scene ids")
        for s, l in scenes:
            if not l:
                raise ValueError(f"scene {s!r} has an empty label set")
        object.__setattr__(self, "scenes", scenes)

    @classmethod
    def from_json(cls, obj) -> "DatasetIndex":
        """Accepts ``{"scenes": [{"id": ..., "labels": [...]}, ...]}`` or ``{id: [labels]}``."""
        if isinstance(obj, dict) and "scenes" in obj:
            return cls([(s["id"], s["labels"]) for s in obj["scenes"]])
        if isinstance(obj, dict):
            return cls(list(obj.items()))
        raise ValueError("dataset index must be a JSON object")


def stratified_folds(index: DatasetIndex, k: int, seed: int = 0) -> dict[str, int]:
    """Multi-label iterative stratification into ``k`` folds.

    The rarest remaining label is handled first; each of its scenes goes to
    the fold that still wants the most of that label, then to the fold with
    the most spare capacity, then to the lowest fold index. Once the
    unassigned scenes are just enough to fill the empty folds, only empty
    folds are eligible, so no fold ends up empty. ``seed`` only orders
    equally rare labels and the scenes within a label.
    """
    n = len(index.scenes)
    if not 2 <= k <= n:
        raise ValueError(f"fold count must be in [2, {n}], got {k}")
    rng = np.random.default_rng(seed)
    scene_rank = rng.permutation(n)
    labels = sorted({l for _, ls in index.scenes for l in ls}, key=repr)
    label_rank = dict(zip(labels, rng.permutation(len(labels))))

    label_total = {l: sum(1 for _, ls in index.scenes if l in ls) for l in labels}
    desired = {l: np.full(k, label_total[l] / k) for l in labels}
    capacity = np.full(k, n / k)
    size = np.zeros(k, int)

    remaining = set(range(n))
    fold_of: dict[str, int] = {}
    while remaining:
        counts = {l: [i for i in remaining if l in index.scenes[i][1]] for l in labels}
        live = [l for l in labels if counts[l]]
        label = min(live, key=lambda l: (len(counts[l]), label_rank[l]))
        for i in sorted(counts[label], key=lambda i: scene_rank[i]):
            # once every remaining scene is needed to fill an empty fold,
            # only empty folds may take it
            empty = size == 0
            folds = np.nonzero(empty)[0] if len(remaining) <= empty.sum() else np.arange(k)
            j = min(folds, key=lambda j: (-desired[label][j], -capacity[j], j))
            sid, ls = index.scenes[i]
            fold_of[sid] = int(j)
            for l in ls:
                desired[l][j] -= 1
            capacity[j] -= 1
            size[j] += 1
            remaining.discard(i)
    return {sid: fold_of[sid] for sid, _ in index.scenes}
