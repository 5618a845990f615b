"""Pinhole camera geometry: back-projection, z-buffered reprojection, normals.

Camera frame convention: x right, y down, z forward along the optical axis.
Pixel ``(u, v)`` is column ``u``, row ``v``; its ray is
``((u - cx) / fx, (v - cy) / fy, 1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core_types import DepthMap, FormatError


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics plus the rigid sensor-to-reference pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError("camera width and height must be positive")
        pose = np.eye(4) if self.pose is None else np.array(self.pose, dtype=np.float64).reshape(4, 4)
        R = pose[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("pose rotation must be orthonormal with determinant +1")
        if not np.allclose(pose[3], [0, 0, 0, 1], atol=1e-12):
            raise ValueError("pose last row must be [0, 0, 0, 1]")
        pose.setflags(write=False)
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "pose", pose)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def rotation(self):
        return self.pose[:3, :3]

    @property
    def translation(self):
        return self.pose[:3, 3]

    def rays(self) -> np.ndarray:
        """Unnormalized viewing rays with z = 1, shape ``(H, W, 3)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)

    def with_pose(self, pose) -> "CameraModel":
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)

    def to_json(self):
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "pose": [float(x) for x in self.pose.reshape(-1)],
        }

    @classmethod
    def from_json(cls, obj) -> "CameraModel":
        try:
            pose = obj.get("pose")
            if pose is not None and len(pose) != 16:
                raise ValueError(f"pose must have 16 entries, got {len(pose)}")
            return cls(obj["fx"], obj["fy"], obj["cx"], obj["cy"], obj["width"], obj["height"], pose)
        except (KeyError, TypeError, AttributeError) as e:
            raise FormatError(f"malformed camera description: {e!r}") from e


def load_camera(path) -> CameraModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"camera file not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    return CameraModel.from_json(obj)


def save_camera(cam: CameraModel, path) -> None:
    Path(path).write_text(json.dumps(cam.to_json(), indent=1) + "\n")


def _check_dims(depth: DepthMap, cam: CameraModel):
    if depth.shape != cam.shape:
        raise ValueError(f"depth dims {depth.shape} do not match camera dims {cam.shape}")


def back_project(depth: DepthMap, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Organized point buffer ``(H, W, 3)`` in the camera frame, plus its validity mask.

    Invalid pixels hold the zero vector.
    """
    _check_dims(depth, cam)
    points = cam.rays() * depth.values[..., None]
    return points, depth.valid.copy()


def transform_points(points: np.ndarray, pose: np.ndarray) -> np.ndarray:
    return points @ pose[:3, :3].T + pose[:3, 3]


def reproject_depth(src: DepthMap, src_cam: CameraModel, dst_cam: CameraModel) -> DepthMap:
    """Forward-splat ``src`` into ``dst_cam``'s image with a z-buffer.

    Each valid source pixel lands on the nearest target pixel; when several
    land on the same target the smallest depth wins. Targets that receive
    nothing stay invalid.
    """
    points, valid = back_project(src, src_cam)
    pts = points[valid]
    # sensor -> reference -> destination sensor
    ref = transform_points(pts, src_cam.pose)
    R, t = dst_cam.rotation, dst_cam.translation
    local = (ref - t) @ R
    z = local[:, 2]
    front = z > 0
    local, z = local[front], z[front]
    u = np.rint(dst_cam.fx * local[:, 0] / z + dst_cam.cx)
    v = np.rint(dst_cam.fy * local[:, 1] / z + dst_cam.cy)
    inside = (u >= 0) & (u < dst_cam.width) & (v >= 0) & (v < dst_cam.height)
    flat = v[inside].astype(np.int64) * dst_cam.width + u[inside].astype(np.int64)
    zbuf = np.full(dst_cam.width * dst_cam.height, np.inf)
    np.minimum.at(zbuf, flat, z[inside])
    zbuf = zbuf.reshape(dst_cam.shape)
    hit = np.isfinite(zbuf)
    return DepthMap(np.where(hit, zbuf, 0.0), hit)


def estimate_normals(depth: DepthMap, cam: CameraModel, window: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit normals ``(H, W, 3)`` and validity mask.

    Tangents are central differences of the back-projected points at a
    half-window offset. A normal is valid only if every pixel of the
    ``window x window`` neighborhood has valid depth. Normals are oriented
    toward the camera (negative dot product with the viewing ray).
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"normal window must be odd and >= 3, got {window}")
    points, valid = back_project(depth, cam)
    h = window // 2
    H, W = depth.shape
    # window-complete support; pixels closer than h to the border have none
    support = ndimage.minimum_filter(valid.astype(np.uint8), size=window, mode="constant", cval=0).astype(bool)

    padded = np.pad(points, ((h, h), (h, h), (0, 0)))
    tx = padded[h : h + H, 2 * h :][:, :W] - padded[h : h + H, : W]
    ty = padded[2 * h :, h : h + W][:H] - padded[:H, h : h + W]
    n = np.cross(tx, ty)
    norm = np.linalg.norm(n, axis=-1)
    ok = support & (norm > 1e-12)
    n = np.where(ok[..., None], n / np.where(ok, norm, 1.0)[..., None], 0.0)
    flip = np.sum(n * points, axis=-1) > 0
    n[flip] *= -1
    return n, ok
