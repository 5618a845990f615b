"""Synthetic RGB-D scenes with exact ground truth.

A scene is a back wall plus fronto-parallel rectangular patches ("objects")
placed in the reference camera frame. Each simulated depth sensor ray-casts
that geometry from its own pose and adds seeded noise and dropouts; one
sensor can carry a band of corrupted wall measurements.
"""

from __future__ import annotations

import copy
import json

import numpy as np

from . import core_types as ct
from .geometry import CameraModel, save_camera

DEFAULT_SCENE = {
    "width": 320,
    "height": 240,
    "fx": 400.0,
    "fy": 400.0,
    "num_classes": 4,
    "background": {"depth": 1.4, "color": [96, 96, 104]},
    "shapes": [
        {"rect": [40, 60, 80, 90], "depth": 1.0, "color": [200, 40, 40], "class_id": 1},
        {"rect": [150, 40, 60, 120], "depth": 1.15, "color": [40, 170, 60], "class_id": 2},
        {"rect": [225, 110, 70, 80], "depth": 0.9, "color": [50, 70, 200], "class_id": 3},
    ],
    # two RGB-D sensors, then stereo; offsets are sensor positions in the reference frame
    "sensors": [
        {"offset": [0.0, 0.0, 0.0], "noise": 0.002, "dropout": 0.15},
        {"offset": [0.0, 0.05, 0.0], "noise": 0.002, "dropout": 0.15},
        {"offset": [0.0, 0.0, 0.0], "noise": 0.01, "dropout": 0.3},
    ],
    "corrupt": {"sensor": 1, "columns": [120, 150], "offset": 0.08},
    "detections": {"jitter": 3, "false_positives": 1},
}


def default_scene_spec() -> dict:
    return copy.deepcopy(DEFAULT_SCENE)


def _patches(spec, cam: CameraModel):
    """Patch rectangles as metric extents on their planes in the reference frame."""
    out = []
    for k, s in enumerate(spec["shapes"]):
        x, y, w, h = s["rect"]
        d = float(s["depth"])
        if not d > 0 or w <= 0 or h <= 0:
            raise ValueError(f"shape {k}: need positive depth and extents")
        # pixel centers x .. x+w-1 are covered
        x0 = (x - 0.5 - cam.cx) / cam.fx * d
        x1 = (x + w - 0.5 - cam.cx) / cam.fx * d
        y0 = (y - 0.5 - cam.cy) / cam.fy * d
        y1 = (y + h - 0.5 - cam.cy) / cam.fy * d
        out.append((d, x0, x1, y0, y1))
    return out


def ray_cast(spec, ref: CameraModel, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact depth seen by ``cam`` and the index of the hit surface (-1 = wall)."""
    dirs = cam.rays() @ cam.rotation.T
    origin = cam.translation
    wall = float(spec["background"]["depth"])
    depth = (wall - origin[2]) / dirs[..., 2]
    hit = np.full(depth.shape, -1, np.int64)
    for k, (d, x0, x1, y0, y1) in enumerate(_patches(spec, ref)):
        t = (d - origin[2]) / dirs[..., 2]
        X = origin[0] + t * dirs[..., 0]
        Y = origin[1] + t * dirs[..., 1]
        on = (t > 0) & (X >= x0) & (X < x1) & (Y >= y0) & (Y < y1) & (t < depth)
        depth = np.where(on, t, depth)
        hit[on] = k
    return depth, hit


def make_synthetic_scene(spec: dict | None, out_dir, seed: int = 0) -> dict:
    """Write a complete scene directory and return its ground truth.

    Files: ``camera.json``, ``rgb.png``, ``depth_<i>.png`` and
    ``camera_<i>.json`` per sensor, ``detections.json``, ``seg_c<k>.pfm``,
    ``gt_labels.png``, ``gt_boxes.json``, ``gt_depth.pfm``, ``scene.json``.
    """
    spec = default_scene_spec() if spec is None else copy.deepcopy(spec)
    if not spec.get("shapes"):
        raise ValueError("scene spec needs at least one shape")
    rng = np.random.default_rng(seed)
    out = ct.ensure_dir(out_dir)
    W, H = int(spec["width"]), int(spec["height"])
    C = int(spec["num_classes"])
    ref = CameraModel(spec["fx"], spec["fy"], spec.get("cx", (W - 1) / 2), spec.get("cy", (H - 1) / 2), W, H)
    save_camera(ref, out / "camera.json")

    gt_depth, hit = ray_cast(spec, ref, ref)
    instance_class = np.array([int(s["class_id"]) for s in spec["shapes"]])
    if instance_class.min() < 1 or instance_class.max() >= C:
        raise ValueError(f"shape class ids must lie in [1, {C})")
    labels = np.where(hit >= 0, instance_class[np.maximum(hit, 0)], 0)

    colors = np.array([s["color"] for s in spec["shapes"]] + [spec["background"]["color"]], np.int64)
    rgb = colors[np.where(hit >= 0, hit, len(spec["shapes"]))]
    rgb = np.clip(rgb + rng.integers(-2, 3, size=rgb.shape), 0, 255).astype(np.uint8)
    ct.save_color(ct.ColorImage(rgb), out / "rgb.png")
    ct.save_labels(ct.LabelMap(labels), out / "gt_labels.png")
    ct.save_float_map(gt_depth.astype(np.float32), out / "gt_depth.pfm")

    boxes = []
    for k, cls in enumerate(instance_class):
        vs, us = np.nonzero(hit == k)
        if us.size:
            boxes.append({"class_id": int(cls),
                          "bbox": [int(us.min()), int(vs.min()), int(us.max() - us.min() + 1), int(vs.max() - vs.min() + 1)]})
    (out / "gt_boxes.json").write_text(json.dumps(boxes, indent=1) + "\n")

    corrupt = spec.get("corrupt")
    for i, sensor in enumerate(spec["sensors"]):
        pose = np.eye(4)
        pose[:3, 3] = sensor["offset"]
        cam = ref.with_pose(pose)
        depth, shit = ray_cast(spec, ref, cam)
        depth = depth + rng.normal(0.0, sensor["noise"], depth.shape)
        if corrupt and corrupt["sensor"] == i:
            c0, c1 = corrupt["columns"]
            band = np.zeros(depth.shape, bool)
            band[:, c0:c1] = True
            depth = np.where(band & (shit < 0), depth + corrupt["offset"], depth)
        valid = rng.random(depth.shape) >= sensor["dropout"]
        save_camera(cam, out / f"camera_{i}.json")
        ct.save_depth(ct.DepthMap(np.where(valid, depth, 0.0), valid), out / f"depth_{i}.png")

    det_cfg = spec.get("detections", {})
    jitter = det_cfg.get("jitter", 3)
    dets = []
    for b in boxes:
        x, y, w, h = b["bbox"]
        dx, dy, dw, dh = rng.integers(-jitter, jitter + 1, size=4)
        dets.append(ct.Detection(b["class_id"], float(rng.uniform(0.6, 0.95)),
                                 (x + dx, y + dy, max(w + dw, 4), max(h + dh, 4))))
    for _ in range(det_cfg.get("false_positives", 0)):
        w, h = rng.integers(20, 60, size=2)
        dets.append(ct.Detection(int(rng.integers(1, C)), float(rng.uniform(0.1, 0.4)),
                                 (int(rng.integers(0, W - w)), int(rng.integers(0, H - h)), int(w), int(h))))
    ct.save_detections(dets, out / "detections.json")

    # segmentation posterior: softened one-hot labels with noise, normalized per pixel
    logits = 2.5 * np.eye(C)[labels].transpose(2, 0, 1) + rng.normal(0.0, 0.6, (C, H, W))
    p = np.exp(logits - logits.max(axis=0))
    p /= p.sum(axis=0)
    ct.save_probability_map(ct.ProbabilityMap(p.astype(np.float32)), out / "seg.pfm")

    (out / "scene.json").write_text(json.dumps({"spec": spec, "seed": seed}, indent=1) + "\n")
    return {
        "depth": gt_depth,
        "labels": labels,
        "boxes": boxes,
        "camera": ref,
        "band_columns": tuple(corrupt["columns"]) if corrupt else None,
        "corrupt_sensor": corrupt["sensor"] if corrupt else None,
    }
