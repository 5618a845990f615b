"""Combine object detections with a semantic segmentation posterior.

Detections are rendered into a per-class map ``P_det`` scaled so that its
global maximum is one, then multiplied into the segmentation posterior::

    P_combined = P_seg * (prior_floor + det_weight * P_det)

The floor keeps classes the detector missed from vanishing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import Detection, LabelMap, ProbabilityMap


@dataclass(frozen=True)
class CombineConfig:
    prior_floor: float = 0.1
    det_weight: float = 0.9
    # sigma = sigma_frac * half-extent, so +-2 sigma spans the box
    sigma_frac: float = 0.5

    def __post_init__(self):
        if self.prior_floor < 0 or self.det_weight < 0:
            raise ValueError("prior_floor and det_weight must be non-negative")
        if self.prior_floor + self.det_weight > 1.0 + 1e-12:
            raise ValueError("prior_floor + det_weight must not exceed 1")
        if not self.sigma_frac > 0:
            raise ValueError("sigma_frac must be positive")


def _accumulate(dets, num_classes, width, height, cfg, mode):
    acc = np.zeros((num_classes, height, width))
    # pixel (u, v) covers [u, u+1) x [v, v+1); sample at its center
    uc = np.arange(width) + 0.5
    vc = np.arange(height) + 0.5
    # canonical order makes the floating-point sums independent of input order
    order = sorted(range(len(dets)), key=lambda i: (dets[i].class_id, dets[i].confidence, dets[i].box))
    for i in order:
        d = dets[i]
        if not 0 <= d.class_id < num_classes:
            raise ValueError(f"detection {i}: class_id {d.class_id} outside [0, {num_classes})")
        x, y, w, h = d.box
        if mode == "gaussian":
            sx = cfg.sigma_frac * w / 2.0
            sy = cfg.sigma_frac * h / 2.0
            gx = np.exp(-0.5 * ((uc - (x + w / 2.0)) / sx) ** 2)
            gy = np.exp(-0.5 * ((vc - (y + h / 2.0)) / sy) ** 2)
            acc[d.class_id] += d.confidence * np.outer(gy, gx)
        elif mode == "box":
            u0, u1 = np.clip([int(np.floor(x)), int(np.ceil(x + w))], 0, width)
            v0, v1 = np.clip([int(np.floor(y)), int(np.ceil(y + h))], 0, height)
            acc[d.class_id, v0:v1, u0:u1] += d.confidence
        else:
            raise ValueError(f"unknown render mode {mode!r}")
    return acc


def render_detection_map(dets: list[Detection], num_classes: int, width: int, height: int,
                         cfg: CombineConfig = CombineConfig(), mode: str = "gaussian") -> ProbabilityMap:
    """Per-class detection map normalized by its global maximum.

    ``gaussian`` adds ``confidence * N(center, diag(sx^2, sy^2))`` (unnormalized)
    per detection; ``box`` adds the confidence uniformly inside the box.
    An all-zero accumulation is returned unchanged.
    """
    if width <= 0 or height <= 0 or num_classes <= 0:
        raise ValueError("width, height and num_classes must be positive")
    acc = _accumulate(dets, num_classes, width, height, cfg, mode)
    peak = acc.max()
    if peak > 0:
        acc /= peak
    return ProbabilityMap(acc)


def combine(p_seg: ProbabilityMap, p_det: ProbabilityMap, cfg: CombineConfig = CombineConfig()) -> ProbabilityMap:
    if p_seg.values.shape != p_det.values.shape:
        raise ValueError(f"shape mismatch: segmentation {p_seg.values.shape}, detection {p_det.values.shape}")
    return ProbabilityMap(p_seg.values * (cfg.prior_floor + cfg.det_weight * p_det.values))


def argmax_labels(p: ProbabilityMap, min_prob: float = 0.0) -> LabelMap:
    """Most probable class per pixel; lowest index on ties, class 0 below ``min_prob``."""
    v = p.values
    labels = np.argmax(v, axis=0)  # first maximum wins
    labels[v.max(axis=0) < min_prob] = 0
    return LabelMap(labels)
