"""Depth-based region proposals via connected components on RGB-D similarity.

Two 4-adjacent pixels are joined when their 3-D points, normals, HSV
saturation and RGB color are all within the configured thresholds. Regions
large enough relative to the image become bounding-box proposals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _graph_components

from .core_types import ColorImage, Detection

BACKGROUND = -1
# 10,000 px on a 1920x1080 frame
DEFAULT_MIN_AREA_FRAC = 10000.0 / (1920 * 1080)


@dataclass(frozen=True)
class ProposalConfig:
    max_pos_diff: float = 0.005
    max_normal_angle: float = 50.0
    max_sat_diff: float = 10.0
    max_color_diff: float = 10.0
    min_area_frac: float = DEFAULT_MIN_AREA_FRAC

    def __post_init__(self):
        for name in ("max_pos_diff", "max_normal_angle", "max_sat_diff", "max_color_diff", "min_area_frac"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class RegionLabeling:
    labels: np.ndarray  # int64, BACKGROUND or region index
    region_count: int


def saturation(rgb: np.ndarray) -> np.ndarray:
    """HSV saturation on the 8-bit scale: ``255 * (max - min) / max``, 0 for black."""
    c = rgb.astype(np.float64)
    mx = c.max(axis=-1)
    mn = c.min(axis=-1)
    return np.where(mx > 0, 255.0 * (mx - mn) / np.where(mx > 0, mx, 1.0), 0.0)


def _edge_ok(a, b, points, normals, sat, rgb, valid, cfg: ProposalConfig):
    """Predicate for pixel pairs given as index tuples ``a`` and ``b``."""
    ok = valid[a] & valid[b]
    ok &= np.linalg.norm(points[a] - points[b], axis=-1) <= cfg.max_pos_diff
    cos = np.clip(np.sum(normals[a] * normals[b], axis=-1), -1.0, 1.0)
    ok &= np.degrees(np.arccos(cos)) <= cfg.max_normal_angle
    ok &= np.abs(sat[a] - sat[b]) <= cfg.max_sat_diff
    ok &= np.abs(rgb[a] - rgb[b]).max(axis=-1) <= cfg.max_color_diff
    return ok


def connected_components(rgb: ColorImage, points: np.ndarray, normals: np.ndarray,
                         cfg: ProposalConfig = ProposalConfig(), valid: np.ndarray | None = None) -> RegionLabeling:
    """Label 4-connected regions of mutually similar pixels.

    ``valid`` marks pixels with both usable depth and normal; it defaults to
    pixels whose point and normal are finite with a non-zero normal. Invalid
    pixels are background. Region indices follow the first pixel of each
    region in row-major order.
    """
    H, W = rgb.shape
    if points.shape != (H, W, 3) or normals.shape != (H, W, 3):
        raise ValueError(f"dims differ: rgb {(H, W)}, points {points.shape[:2]}, normals {normals.shape[:2]}")
    if valid is None:
        valid = (np.isfinite(points).all(-1) & np.isfinite(normals).all(-1)
                 & (np.abs(normals).sum(-1) > 0))
    elif valid.shape != (H, W):
        raise ValueError(f"valid mask dims {valid.shape} do not match {(H, W)}")
    valid = valid.astype(bool)
    points = np.where(valid[..., None], points, 0.0)
    normals = np.where(valid[..., None], normals, 0.0)
    color = rgb.values.astype(np.int64)
    sat = saturation(rgb.values)

    idx = np.arange(H * W).reshape(H, W)
    rows, cols = [], []
    for a, b in (
        ((slice(None), slice(0, W - 1)), (slice(None), slice(1, W))),
        ((slice(0, H - 1), slice(None)), (slice(1, H), slice(None))),
    ):
        ok = _edge_ok(a, b, points, normals, sat, color, valid, cfg)
        rows.append(idx[a][ok])
        cols.append(idx[b][ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, np.int8), (rows, cols)), shape=(H * W, H * W)).tocsr()
    _, comp = _graph_components(graph, directed=False)

    # canonical numbering by first valid pixel in scan order
    flat_valid = valid.reshape(-1)
    comp_valid = comp[flat_valid]
    uniq, first = np.unique(comp_valid, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.full(comp.max() + 1 if comp.size else 1, BACKGROUND, np.int64)
    remap[uniq[order]] = np.arange(uniq.size)
    labels = np.full(H * W, BACKGROUND, np.int64)
    labels[flat_valid] = remap[comp_valid]
    return RegionLabeling(labels.reshape(H, W), int(uniq.size))


def extract_boxes(labeling: RegionLabeling, cfg: ProposalConfig = ProposalConfig(),
                  image_area: int | None = None) -> list[Detection]:
    """Tight boxes around regions covering at least ``min_area_frac`` of the image.

    Ordered by descending pixel count, ties by region index.
    """
    labels = labeling.labels
    if image_area is None:
        image_area = labels.size
    n = labeling.region_count
    if n == 0:
        return []
    fg = labels >= 0
    lab = labels[fg]
    vs, us = np.nonzero(fg)
    counts = np.bincount(lab, minlength=n)
    umin = np.full(n, np.iinfo(np.int64).max)
    vmin = umin.copy()
    umax = np.full(n, -1)
    vmax = umax.copy()
    np.minimum.at(umin, lab, us)
    np.minimum.at(vmin, lab, vs)
    np.maximum.at(umax, lab, us)
    np.maximum.at(vmax, lab, vs)

    threshold = cfg.min_area_frac * image_area
    # the fraction is a rounded ratio; absorb its representation error
    keep = counts >= threshold * (1.0 - 1e-12)
    order = sorted(np.nonzero(keep)[0], key=lambda r: (-counts[r], r))
    return [
        Detection(-1, 1.0, (float(umin[r]), float(vmin[r]), float(umax[r] - umin[r] + 1), float(vmax[r] - vmin[r] + 1)))
        for r in order
    ]


def region_colors(labeling: RegionLabeling, seed: int = 0) -> ColorImage:
    """Random-color rendering of a labeling for visual inspection (background black)."""
    rng = np.random.default_rng(seed)
    palette = rng.integers(40, 256, size=(max(labeling.region_count, 1), 3), dtype=np.uint8)
    out = np.zeros(labeling.labels.shape + (3,), np.uint8)
    fg = labeling.labels >= 0
    out[fg] = palette[labeling.labels[fg]]
    return ColorImage(out)
