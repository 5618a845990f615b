"""HHA depth encoding: disparity, height above ground, angle with gravity.

Also provides the raw-depth alternative that replicates scaled depth into
three channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_types import ColorImage, DepthMap
from .geometry import CameraModel, back_project

HEIGHT_SPAN = 2.5  # meters mapped onto [0, 255]


@dataclass(frozen=True)
class HhaConfig:
    # camera y points down in the image, so a level camera sees gravity along +y
    gravity: tuple[float, float, float] = (0.0, 1.0, 0.0)
    min_depth: float = 0.2
    max_depth: float = 3.0
    ground_percentile: float = 0.01

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=np.float64)
        if g.shape != (3,) or abs(np.linalg.norm(g) - 1.0) > 1e-6:
            raise ValueError(f"gravity must be a unit 3-vector, got {self.gravity}")
        if not 0 < self.min_depth < self.max_depth:
            raise ValueError("need 0 < min_depth < max_depth")
        if not 0 < self.ground_percentile < 0.5:
            raise ValueError("ground_percentile must lie in (0, 0.5)")
        object.__setattr__(self, "gravity", tuple(float(x) for x in g))


def _to_byte(x):
    return np.rint(np.clip(x, 0.0, 255.0)).astype(np.uint8)


def disparity_channel(depth: DepthMap, cfg: HhaConfig) -> np.ndarray:
    inv = np.where(depth.valid, 1.0 / np.where(depth.valid, depth.values, 1.0), 0.0)
    lo, hi = 1.0 / cfg.max_depth, 1.0 / cfg.min_depth
    scaled = (inv - lo) / (hi - lo) * 255.0
    return np.where(depth.valid, scaled, 0.0)


def height_above_ground(points: np.ndarray, valid: np.ndarray, cfg: HhaConfig) -> np.ndarray:
    """Signed height along ``-gravity`` relative to the low-percentile ground level.

    Invalid pixels get 0.
    """
    if not valid.any():
        raise ValueError("no valid points")
    up = -np.asarray(cfg.gravity)
    h = points @ up
    ground = np.quantile(h[valid], cfg.ground_percentile)
    return np.where(valid, h - ground, 0.0)


def gravity_angle(normals: np.ndarray, normal_valid: np.ndarray, cfg: HhaConfig) -> np.ndarray:
    """Angle in degrees between each normal and the up direction ``-gravity``."""
    up = -np.asarray(cfg.gravity)
    cos = np.clip(normals @ up, -1.0, 1.0)
    return np.where(normal_valid, np.degrees(np.arccos(cos)), 0.0)


def encode_hha(depth: DepthMap, cam: CameraModel, normals: np.ndarray, normal_valid: np.ndarray,
               cfg: HhaConfig = HhaConfig()) -> ColorImage:
    """Three 8-bit channels: disparity, height above ground, angle to up.

    Channel ranges: disparity over ``[1/max_depth, 1/min_depth]``, height
    over ``[0, 2.5 m]``, angle over ``[0, 180] deg``. Pixels without valid
    depth are 0 in all channels; pixels without a valid normal are 0 in the
    angle channel.
    """
    if not depth.valid.any():
        raise ValueError("depth map has no valid pixels")
    if normals.shape[:2] != depth.shape or normal_valid.shape != depth.shape:
        raise ValueError(f"normal dims {normals.shape[:2]} do not match depth dims {depth.shape}")
    points, valid = back_project(depth, cam)
    nvalid = normal_valid & valid

    c0 = disparity_channel(depth, cfg)
    c1 = height_above_ground(points, valid, cfg) / HEIGHT_SPAN * 255.0
    c2 = gravity_angle(normals, nvalid, cfg) / 180.0 * 255.0
    out = np.stack([_to_byte(c0), _to_byte(np.where(valid, c1, 0.0)), _to_byte(c2)], axis=-1)
    return ColorImage(out)


def encode_raw3(depth: DepthMap, cfg: HhaConfig = HhaConfig()) -> ColorImage:
    """Depth linearly mapped from ``[min_depth, max_depth]`` to [0, 255], replicated 3x."""
    if not depth.valid.any():
        raise ValueError("depth map has no valid pixels")
    scaled = (depth.values - cfg.min_depth) / (cfg.max_depth - cfg.min_depth) * 255.0
    c = np.where(depth.valid, _to_byte(scaled), 0).astype(np.uint8)
    return ColorImage(np.repeat(c[..., None], 3, axis=-1))
