"""Image containers shared by every stage, and their file formats.

All containers wrap numpy arrays in row-major ``(height, width[, ...])``
layout and freeze them after construction, so instances can be shared
freely between stages.

File formats:

* depth: 16-bit grayscale PNG, raw value 0 means "no measurement"
* color: 8-bit RGB PNG
* float maps: little-endian single-channel PFM
* detections: JSON array of ``{"class_id", "confidence", "bbox": [x, y, w, h]}``
* labels: 8-bit grayscale PNG, 255 means "ignore"
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IGNORE_LABEL = 255
DEFAULT_DEPTH_SCALE = 0.001  # millimeters


class FormatError(ValueError):
    """Raised when a file does not conform to its expected format."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth with an explicit validity mask.

    Invalid pixels always hold 0.0 in ``values`` so that arithmetic on the
    raw array can never pick up a NaN; callers must still mask with ``valid``.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ValueError(
                f"depth values {values.shape} and mask {valid.shape} must be equal 2-D shapes"
            )
        if values.size == 0:
            raise ValueError("depth map must have non-zero dimensions")
        valid = valid & np.isfinite(values) & (values > 0)
        values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", _frozen(values, np.float64))
        object.__setattr__(self, "valid", _frozen(valid, bool))

    @classmethod
    def from_array(cls, values) -> "DepthMap":
        """Build from a float array; non-finite or non-positive entries become invalid."""
        values = np.asarray(values, dtype=np.float64)
        return cls(np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0), np.isfinite(values) & (values > 0))

    @property
    def shape(self):
        return self.values.shape

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def as_nan(self) -> np.ndarray:
        """Depth as a float array with NaN at invalid pixels."""
        return np.where(self.valid, self.values, np.nan)


@dataclass(frozen=True, eq=False)
class ColorImage:
    """8-bit RGB image, shape ``(height, width, 3)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"color image must have shape (H, W, 3), got {v.shape}")
        if v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError("color image must have non-zero dimensions")
        if v.dtype != np.uint8:
            if np.any(v < 0) or np.any(v > 255):
                raise ValueError("color values must lie in [0, 255]")
            v = np.rint(v)
        object.__setattr__(self, "values", _frozen(v, np.uint8))

    @property
    def shape(self):
        return self.values.shape[:2]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class WeightMap:
    """Per-pixel confidence in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"weight map must be a non-empty 2-D array, got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("weights must be finite and lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v, np.float64))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-class per-pixel probabilities, shape ``(num_classes, height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or 0 in v.shape:
            raise ValueError(f"probability map must have shape (C, H, W) with C, H, W > 0, got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("probabilities must be finite and lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v, np.float64))

    @property
    def num_classes(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape[1:]


@dataclass(frozen=True)
class Detection:
    """An axis-aligned box ``(x, y, w, h)`` in pixels with a class and a score.

    ``class_id`` is -1 for class-agnostic boxes such as depth proposals.
    """

    class_id: int
    confidence: float
    box: tuple[float, float, float, float]

    def __post_init__(self):
        box = tuple(float(b) for b in self.box)
        if len(box) != 4:
            raise ValueError(f"box must have 4 entries, got {len(box)}")
        if not all(np.isfinite(box)):
            raise ValueError("box coordinates must be finite")
        if box[2] <= 0 or box[3] <= 0:
            raise ValueError(f"box extents must be positive, got w={box[2]}, h={box[3]}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "confidence", float(self.confidence))

    def to_json(self):
        return {"class_id": self.class_id, "confidence": self.confidence, "bbox": list(self.box)}


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class indices with ``ignore`` marking unlabeled pixels."""

    values: np.ndarray
    ignore: int = IGNORE_LABEL

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"label map must be a non-empty 2-D array, got {v.shape}")
        if not np.issubdtype(v.dtype, np.integer):
            if not np.all(v == np.round(v)):
                raise ValueError("labels must be integers")
        object.__setattr__(self, "values", _frozen(v, np.int64))

    @property
    def shape(self):
        return self.values.shape

    def check_classes(self, num_classes: int) -> None:
        v = self.values[self.values != self.ignore]
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise ValueError(f"label values must lie in [0, {num_classes}) or equal {self.ignore}")


@dataclass(frozen=True, eq=False)
class FeatureMapStack:
    """Real-valued activations, shape ``(channels, height, width)``."""

    values: np.ndarray = field()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"feature stack must have shape (C, H, W), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", _frozen(v, np.float64))

    @property
    def shape(self):
        return self.values.shape


# ---------------------------------------------------------------------------
# Depth and color PNGs


def load_depth(path, scale: float = DEFAULT_DEPTH_SCALE) -> DepthMap:
    """Read a 16-bit depth PNG; raw 0 is invalid, everything else is ``raw * scale`` meters."""
    if not scale > 0:
        raise ValueError(f"depth scale must be positive, got {scale}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"depth file not found: {path}")
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L"):
            raise FormatError(f"{path}: expected 16-bit single-channel image, got mode {im.mode!r}")
        raw = np.array(im, dtype=np.uint16)
    return DepthMap(raw.astype(np.float64) * scale, raw > 0)


def save_depth(depth: DepthMap, path, scale: float = DEFAULT_DEPTH_SCALE) -> None:
    """Write a depth map as 16-bit PNG, rounding to the nearest ``scale`` step.

    Depths that round to 0 or beyond 65535 units are written as invalid.
    """
    if not scale > 0:
        raise ValueError(f"depth scale must be positive, got {scale}")
    raw = np.rint(depth.values / scale)
    ok = depth.valid & (raw >= 1) & (raw <= 65535)
    raw = np.where(ok, raw, 0).astype(np.uint16)
    Image.fromarray(raw).save(path, format="PNG")


def load_color(path) -> ColorImage:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"color file not found: {path}")
    with Image.open(path) as im:
        if im.mode not in ("RGB", "RGBA", "L"):
            raise FormatError(f"{path}: expected 8-bit RGB image, got mode {im.mode!r}")
        return ColorImage(np.array(im.convert("RGB")))


def save_color(img: ColorImage, path) -> None:
    Image.fromarray(img.values, mode="RGB").save(path, format="PNG")


def load_labels(path, num_classes: int | None = None) -> LabelMap:
    """Read an 8-bit label PNG. Values >= ``num_classes`` other than 255 are rejected."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label file not found: {path}")
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise FormatError(f"{path}: expected 8-bit single-channel image, got mode {im.mode!r}")
        labels = LabelMap(np.array(im, dtype=np.uint8))
    if num_classes is not None:
        labels.check_classes(num_classes)
    return labels


def save_labels(labels: LabelMap, path) -> None:
    v = labels.values
    if v.min() < 0 or v.max() > 255:
        raise ValueError("labels must fit in 8 bits")
    Image.fromarray(v.astype(np.uint8), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# PFM float maps

_PFM_DIMS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def save_float_map(values, path) -> None:
    """Write a single-channel float32 PFM (little endian, bottom row first)."""
    a = np.asarray(getattr(values, "values", values))
    if a.ndim != 2 or 0 in a.shape:
        raise ValueError(f"float map must be a non-empty 2-D array, got shape {a.shape}")
    h, w = a.shape
    payload = np.flipud(a.astype("<f4")).tobytes()
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload)


def load_float_map(path) -> np.ndarray:
    """Read a single-channel PFM into a float32 array, top row first."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"float map not found: {path}")
    with open(path, "rb") as f:
        tag = f.readline().rstrip()
        if tag != b"Pf":
            raise FormatError(f"{path}: expected single-channel PFM header 'Pf', got {tag!r}")
        m = _PFM_DIMS.match(f.readline())
        if not m:
            raise FormatError(f"{path}: malformed PFM dimension line")
        w, h = int(m.group(1)), int(m.group(2))
        try:
            scale = float(f.readline())
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM scale line") from e
        if scale == 0:
            raise FormatError(f"{path}: PFM scale must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h:
        raise FormatError(f"{path}: expected {w * h} floats, found {data.size}")
    return np.flipud(data.reshape(h, w)).astype(np.float32)


def class_map_path(path, k: int) -> Path:
    """``seg.pfm`` -> ``seg_c<k>.pfm``."""
    p = Path(path)
    return p.with_name(f"{p.stem}_c{k}{p.suffix or '.pfm'}")


def save_probability_map(pmap: ProbabilityMap, path) -> list[Path]:
    """Write one PFM per class using the ``_c<k>`` suffix convention."""
    out = []
    for k in range(pmap.num_classes):
        p = class_map_path(path, k)
        save_float_map(pmap.values[k], p)
        out.append(p)
    return out


def load_probability_map(path, num_classes: int | None = None) -> ProbabilityMap:
    """Read ``<stem>_c0.pfm, <stem>_c1.pfm, ...``; without ``num_classes`` read until a gap."""
    layers = []
    k = 0
    while num_classes is None or k < num_classes:
        p = class_map_path(path, k)
        if not p.is_file():
            if num_classes is not None or k == 0:
                raise FileNotFoundError(f"class map not found: {p}")
            break
        layers.append(load_float_map(p).astype(np.float64))
        k += 1
    shapes = {l.shape for l in layers}
    if len(shapes) != 1:
        raise FormatError(f"class maps under {path} have inconsistent shapes {sorted(shapes)}")
    return ProbabilityMap(np.clip(np.stack(layers), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Detections JSON


def parse_detections(records, num_classes: int | None = None) -> list[Detection]:
    if not isinstance(records, list):
        raise FormatError("detections must be a JSON array")
    dets = []
    for i, r in enumerate(records):
        try:
            if not isinstance(r, dict):
                raise TypeError("record is not an object")
            class_id = r["class_id"]
            if isinstance(class_id, bool) or not isinstance(class_id, int):
                raise TypeError("class_id must be an integer")
            bbox = r["bbox"]
            if not isinstance(bbox, list) or len(bbox) != 4:
                raise TypeError("bbox must be a list of 4 numbers")
            det = Detection(class_id, float(r["confidence"]), tuple(float(b) for b in bbox))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"detection record {i}: {e}") from e
        if num_classes is not None and not (-1 <= det.class_id < num_classes):
            raise FormatError(f"detection record {i}: class_id {det.class_id} outside [0, {num_classes})")
        dets.append(det)
    return dets


def load_detections(path, num_classes: int | None = None) -> list[Detection]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"detections file not found: {path}")
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    return parse_detections(records, num_classes)


def save_detections(dets, path) -> None:
    with open(path, "w") as f:
        json.dump([d.to_json() for d in dets], f, indent=1)
        f.write("\n")


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
