"""Confidence-weighted fusion of several registered depth streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import DepthMap, WeightMap

# two RGB-D sensors, then stereo
DEFAULT_ALPHAS = (40.0, 40.0, 0.1)


@dataclass(frozen=True)
class FusionConfig:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    max_spread: float = 0.05

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas or any(not a > 0 for a in alphas):
            raise ValueError(f"all fusion weights must be positive, got {alphas}")
        if not self.max_spread > 0:
            raise ValueError(f"max_spread must be positive, got {self.max_spread}")
        object.__setattr__(self, "alphas", alphas)


def fuse(sources: list[DepthMap], cfg: FusionConfig = FusionConfig()) -> tuple[DepthMap, WeightMap]:
    """Fuse depth maps that already live in one common frame.

    Per pixel, over the sources with a valid measurement:

        D = sum(alpha_i * D_i) / sum(alpha_i)
        w = exp(-(max_i D_i - min_i D_i))

    with the spread measured in meters. Pixels whose spread exceeds
    ``cfg.max_spread`` are dropped, as are pixels no source covers; both get
    ``w = 0``. A single valid source passes through with ``w = 1``.
    """
    if not sources:
        raise ValueError("need at least one depth source")
    if len(cfg.alphas) != len(sources):
        raise ValueError(f"got {len(sources)} sources but {len(cfg.alphas)} fusion weights")
    shape = sources[0].shape
    for i, s in enumerate(sources):
        if s.shape != shape:
            raise ValueError(f"source {i} has dims {s.shape}, expected {shape}")

    depth = np.stack([s.values for s in sources])
    valid = np.stack([s.valid for s in sources])
    alpha = np.asarray(cfg.alphas)[:, None, None] * valid

    wsum = alpha.sum(axis=0)
    covered = wsum > 0
    fused = (alpha * depth).sum(axis=0) / np.where(covered, wsum, 1.0)
    hi = np.where(valid, depth, -np.inf).max(axis=0)
    lo = np.where(valid, depth, np.inf).min(axis=0)
    spread = np.where(covered, hi - lo, 0.0)
    # rounding can push a weighted mean one ulp outside the sample range
    fused = np.clip(fused, np.where(covered, lo, 0.0), np.where(covered, hi, 0.0))

    keep = covered & (spread <= cfg.max_spread)
    weight = np.where(keep, np.exp(-spread), 0.0)
    return DepthMap(np.where(keep, fused, 0.0), keep), WeightMap(weight)
