"""End-to-end run over a scene directory.

Scene directory layout::

    camera.json                 reference (RGB) camera
    rgb.png
    depth_<i>.png, camera_<i>.json   one pair per depth source, i = 0, 1, ...
    detections.json             optional, external detector output
    seg_c<k>.pfm                optional, external segmentation posterior

Stages run in the order reproject, fuse, densify, hha, propose, combine,
argmax. Each writes its outputs to the output directory; ``summary.json``
records per-stage wall time and SHA-256 checksums.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core_types as ct
from .depth_fusion import FusionConfig, fuse
from .geometry import back_project, estimate_normals, load_camera, reproject_depth
from .hha_encode import HhaConfig, encode_hha, encode_raw3
from .posterior_fusion import CombineConfig, argmax_labels, combine, render_detection_map
from .region_proposals import ProposalConfig, connected_components, extract_boxes, region_colors
from .tgv_densify import TgvConfig, densify

STAGES = ("reproject", "fuse", "densify", "hha", "propose", "combine", "argmax")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class MissingInputError(StageError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    fusion: FusionConfig = FusionConfig()
    # the data term is in squared meters; weight it so noise-level residuals
    # and object-sized steps are not traded away by the regularizer
    tgv: TgvConfig = TgvConfig(data_scale=1000.0)
    hha: HhaConfig = HhaConfig()
    proposals: ProposalConfig = ProposalConfig()
    combine: CombineConfig = CombineConfig()
    stages: dict = field(default_factory=lambda: {s: True for s in STAGES})
    depth_scale: float = ct.DEFAULT_DEPTH_SCALE
    normal_window: int = 5
    raw3: bool = False
    render_mode: str = "gaussian"
    min_prob: float = 0.0

    def enabled(self, stage: str) -> bool:
        return bool(self.stages.get(stage, True))


_NESTED = {"fusion": FusionConfig, "tgv": TgvConfig, "hha": HhaConfig, "proposals": ProposalConfig, "combine": CombineConfig}


def _build(cls, obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in obj.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(obj: dict) -> PipelineConfig:
    """Strict loader: unknown keys anywhere are errors."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = {}
    defaults = PipelineConfig()
    for key, value in obj.items():
        if key in _NESTED:
            merged = dataclasses.asdict(getattr(defaults, key))
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            bad = set(value) - set(merged)
            if bad:
                raise ConfigError(f"{key}: unknown keys {sorted(bad)}")
            merged.update(value)
            kwargs[key] = _build(_NESTED[key], merged, key)
        elif key == "stages":
            if not isinstance(value, dict) or set(value) - set(STAGES):
                raise ConfigError(f"stages: keys must be among {list(STAGES)}")
            kwargs[key] = {s: bool(value.get(s, True)) for s in STAGES}
        else:
            kwargs[key] = value
    try:
        cfg = dataclasses.replace(defaults, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if cfg.render_mode not in ("gaussian", "box"):
        raise ConfigError(f"render_mode must be 'gaussian' or 'box', got {cfg.render_mode!r}")
    if not cfg.depth_scale > 0:
        raise ConfigError("depth_scale must be positive")
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return config_from_dict(obj)


def config_to_dict(cfg: PipelineConfig) -> dict:
    d = dataclasses.asdict(cfg)
    return json.loads(json.dumps(d, default=list))


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_energy_trace(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "energy"])
        for it, e in trace:
            w.writerow([it, repr(float(e))])


def _need(stage, path):
    if not Path(path).is_file():
        raise MissingInputError(stage, f"missing input {path}")
    return path


def _source_count(scene: Path) -> int:
    n = 0
    while (scene / f"depth_{n}.png").is_file():
        n += 1
    return n


def run_pipeline(scene_dir, out_dir, cfg: PipelineConfig = PipelineConfig()) -> dict:
    """Run every enabled stage; returns the summary that is also written to ``summary.json``."""
    scene = Path(scene_dir)
    out = ct.ensure_dir(out_dir)
    stages = []
    state: dict = {}

    def stage(name, fn):
        entry = {"name": name, "enabled": cfg.enabled(name), "seconds": 0.0, "outputs": {}}
        stages.append(entry)
        if not entry["enabled"]:
            return
        t0 = time.perf_counter()
        try:
            written = fn()
        except StageError:
            raise
        except (FileNotFoundError, ct.FormatError) as e:
            raise MissingInputError(name, str(e)) from e
        except ValueError as e:
            raise StageError(name, str(e)) from e
        entry["seconds"] = time.perf_counter() - t0
        entry["outputs"] = {Path(p).name: sha256(p) for p in written}

    ref = load_camera(_need("reproject", scene / "camera.json"))

    def do_reproject():
        n = _source_count(scene)
        if n == 0:
            raise MissingInputError("reproject", f"no depth_<i>.png files in {scene}")
        written = []
        state["sources"] = []
        for i in range(n):
            cam = load_camera(_need("reproject", scene / f"camera_{i}.json"))
            d = ct.load_depth(scene / f"depth_{i}.png", cfg.depth_scale)
            r = reproject_depth(d, cam, ref)
            state["sources"].append(r)
            p = out / f"reprojected_{i}.png"
            ct.save_depth(r, p, cfg.depth_scale)
            written.append(p)
        return written

    def do_fuse():
        sources = state.get("sources")
        if sources is None:
            sources = [ct.load_depth(_need("fuse", scene / f"depth_{i}.png"), cfg.depth_scale)
                       for i in range(_source_count(scene))]
        fused, weight = fuse(sources, cfg.fusion)
        state["fused"], state["weight"] = fused, weight
        ct.save_depth(fused, out / "fused_depth.png", cfg.depth_scale)
        ct.save_float_map(weight.values.astype(np.float32), out / "fused_weight.pfm")
        return [out / "fused_depth.png", out / "fused_weight.pfm"]

    def rgb():
        if "rgb" not in state:
            state["rgb"] = ct.load_color(_need("densify", scene / "rgb.png"))
        return state["rgb"]

    def do_densify():
        if "fused" not in state:
            raise MissingInputError("densify", "fused depth unavailable (fuse stage disabled)")
        res = densify(state["fused"], state["weight"], rgb(), cfg.tgv)
        state["depth"] = res.depth
        ct.save_depth(res.depth, out / "dense_depth.png", cfg.depth_scale)
        write_energy_trace(res.energy_trace, out / "energy_trace.csv")
        return [out / "dense_depth.png", out / "energy_trace.csv"]

    def depth():
        d = state.get("depth", state.get("fused"))
        if d is None:
            raise MissingInputError("hha", "no depth available (fuse and densify disabled)")
        return d

    def normals():
        if "normals" not in state:
            state["normals"] = estimate_normals(depth(), ref, cfg.normal_window)
        return state["normals"]

    def do_hha():
        if cfg.raw3:
            img = encode_raw3(depth(), cfg.hha)
        else:
            n, nv = normals()
            img = encode_hha(depth(), ref, n, nv, cfg.hha)
        ct.save_color(img, out / "hha.png")
        return [out / "hha.png"]

    def do_propose():
        pts, pv = back_project(depth(), ref)
        n, nv = normals()
        labeling = connected_components(rgb(), pts, n, cfg.proposals, valid=pv & nv)
        boxes = extract_boxes(labeling, cfg.proposals, ref.width * ref.height)
        ct.save_detections(boxes, out / "proposals.json")
        ct.save_color(region_colors(labeling), out / "regions.png")
        return [out / "proposals.json", out / "regions.png"]

    def seg(stage_name):
        if "seg" not in state:
            _need(stage_name, ct.class_map_path(scene / "seg.pfm", 0))
            state["seg"] = ct.load_probability_map(scene / "seg.pfm")
        return state["seg"]

    def do_combine():
        p_seg = seg("combine")
        dets = ct.load_detections(_need("combine", scene / "detections.json"), p_seg.num_classes)
        dets = [d for d in dets if d.class_id >= 0]
        h, w = p_seg.shape
        p_det = render_detection_map(dets, p_seg.num_classes, w, h, cfg.combine, cfg.render_mode)
        combined = combine(p_seg, p_det, cfg.combine)
        state["combined"] = combined
        return ct.save_probability_map(combined, out / "combined.pfm")

    def do_argmax():
        p = state.get("combined")
        if p is None:
            p = seg("argmax")
        labels = argmax_labels(p, cfg.min_prob)
        ct.save_labels(labels, out / "labels.png")
        return [out / "labels.png"]

    for name, fn in zip(STAGES, (do_reproject, do_fuse, do_densify, do_hha, do_propose, do_combine, do_argmax)):
        stage(name, fn)

    summary = {"scene": str(scene), "stages": stages, "config": config_to_dict(cfg)}
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary
