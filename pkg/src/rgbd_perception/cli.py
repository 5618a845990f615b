"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 config error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import core_types as ct
from . import evaluation as ev
from .depth_fusion import fuse
from .geometry import back_project, estimate_normals, load_camera, reproject_depth
from .hha_encode import encode_hha, encode_raw3
from .pipeline import ConfigError, MissingInputError, PipelineConfig, StageError, load_config, run_pipeline, write_energy_trace
from .posterior_fusion import argmax_labels, combine, render_detection_map
from .region_proposals import connected_components, extract_boxes, region_colors
from .synthetic import default_scene_spec, make_synthetic_scene
from .tgv_densify import densify

log = logging.getLogger("rgbd_perception")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3, 4


class InputError(Exception):
    pass


def _out(args) -> Path:
    return ct.ensure_dir(args.out)


def _config(args) -> PipelineConfig:
    return load_config(args.config) if args.config else PipelineConfig()


def cmd_fuse(args):
    cfg = _config(args)
    if len(args.depth) != len(args.camera):
        raise InputError(f"got {len(args.depth)} depth files but {len(args.camera)} cameras")
    cams = [load_camera(c) for c in args.camera]
    ref = load_camera(args.reference) if args.reference else cams[0]
    sources = [reproject_depth(ct.load_depth(d, cfg.depth_scale), c, ref) for d, c in zip(args.depth, cams)]
    fusion = cfg.fusion
    if args.alphas:
        fusion = type(fusion)(alphas=tuple(args.alphas), max_spread=fusion.max_spread)
    depth, weight = fuse(sources, fusion)
    out = _out(args)
    ct.save_depth(depth, out / "fused_depth.png", cfg.depth_scale)
    ct.save_float_map(weight.values.astype(np.float32), out / "fused_weight.pfm")
    log.info("fused %d sources; %.1f%% pixels valid", len(sources), 100 * depth.valid.mean())


def cmd_densify(args):
    cfg = _config(args)
    depth = ct.load_depth(args.depth, cfg.depth_scale)
    weight = ct.WeightMap(np.clip(ct.load_float_map(args.weight).astype(np.float64), 0.0, 1.0))
    res = densify(depth, weight, ct.load_color(args.rgb), cfg.tgv)
    out = _out(args)
    ct.save_depth(res.depth, out / "dense_depth.png", cfg.depth_scale)
    write_energy_trace(res.energy_trace, out / "energy_trace.csv")
    log.info("densified in %d iterations, final energy %.6g", res.iterations_run, res.energy_trace[-1][1])


def cmd_hha(args):
    cfg = _config(args)
    depth = ct.load_depth(args.depth, cfg.depth_scale)
    cam = load_camera(args.camera)
    if args.raw3 or cfg.raw3:
        img = encode_raw3(depth, cfg.hha)
    else:
        n, nv = estimate_normals(depth, cam, cfg.normal_window)
        img = encode_hha(depth, cam, n, nv, cfg.hha)
    ct.save_color(img, _out(args) / "hha.png")


def cmd_propose(args):
    cfg = _config(args)
    rgb = ct.load_color(args.rgb)
    depth = ct.load_depth(args.depth, cfg.depth_scale)
    cam = load_camera(args.camera)
    pts, pv = back_project(depth, cam)
    n, nv = estimate_normals(depth, cam, cfg.normal_window)
    labeling = connected_components(rgb, pts, n, cfg.proposals, valid=pv & nv)
    boxes = extract_boxes(labeling, cfg.proposals, cam.width * cam.height)
    out = _out(args)
    ct.save_detections(boxes, out / "proposals.json")
    if args.regions:
        ct.save_color(region_colors(labeling), out / "regions.png")
    log.info("%d regions, %d proposals", labeling.region_count, len(boxes))


def cmd_combine(args):
    cfg = _config(args)
    p_seg = ct.load_probability_map(args.seg)
    dets = [d for d in ct.load_detections(args.detections, p_seg.num_classes) if d.class_id >= 0]
    h, w = p_seg.shape
    mode = args.mode or cfg.render_mode
    p_det = render_detection_map(dets, p_seg.num_classes, w, h, cfg.combine, mode)
    combined = combine(p_seg, p_det, cfg.combine)
    out = _out(args)
    ct.save_probability_map(combined, out / "combined.pfm")
    min_prob = cfg.min_prob if args.min_prob is None else args.min_prob
    ct.save_labels(argmax_labels(combined, min_prob), out / "labels.png")


def _gt_scene(obj) -> ev.GroundTruthScene:
    if isinstance(obj, list):
        obj = {"boxes": obj}
    boxes = [(b["class_id"], tuple(b["bbox"])) for b in obj.get("boxes", [])]
    return ev.GroundTruthScene(boxes, None, frozenset(obj.get("candidate_classes", [])))


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ct.FormatError(f"{path}: invalid JSON: {e}") from e


def _table(header, rows) -> str:
    cells = [header] + [[f"{c:.4f}" if isinstance(c, float) else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def evaluate_detections(pred_obj, gt_obj, iou_thresh=0.5) -> tuple[dict, str]:
    """Metrics for ``{scene: [detections]}`` against ``{scene: {"boxes", "candidate_classes"}}``.

    A bare list on either side is treated as a single scene named ``"0"``.
    """
    if isinstance(pred_obj, list):
        pred_obj = {"0": pred_obj}
    if isinstance(gt_obj, list):
        gt_obj = {"0": gt_obj}
    gts = {str(k): _gt_scene(v) for k, v in gt_obj.items()}
    dets = {str(k): ct.parse_detections(v) for k, v in pred_obj.items()}
    m_un, ap_un = ev.mean_average_precision(dets, gts, iou_thresh, informed=False)
    m_in, ap_in = ev.mean_average_precision(dets, gts, iou_thresh, informed=True)
    f1s: dict[int, list] = {}
    for sid, g in gts.items():
        for c in sorted({c for c, _ in g.boxes}):
            f1s.setdefault(c, []).append(ev.location_f1(dets.get(sid, []), g, c))
    loc = {c: [float(np.mean([r[i] for r in v])) for i in range(3)] for c, v in f1s.items()}
    metrics = {
        "iou_threshold": iou_thresh,
        "map_uninformed": m_un,
        "map_informed": m_in,
        "per_class": {
            str(c): {"ap_uninformed": ap_un[c], "ap_informed": ap_in[c],
                     "precision": loc[c][0], "recall": loc[c][1], "f1": loc[c][2]}
            for c in sorted(ap_un)
        },
        "mean_location_f1": float(np.mean([v[2] for v in loc.values()])),
    }
    rows = [[c, ap_un[c], ap_in[c], loc[c][0], loc[c][1], loc[c][2]] for c in sorted(ap_un)]
    rows.append(["mean", m_un, m_in, float(np.mean([v[0] for v in loc.values()])),
                 float(np.mean([v[1] for v in loc.values()])), metrics["mean_location_f1"]])
    return metrics, _table(["class", "AP", "AP(inf)", "prec", "rec", "F1"], rows)


def cmd_evaluate_detections(args):
    metrics, table = evaluate_detections(_read_json(args.pred), _read_json(args.gt), args.iou)
    out = _out(args)
    (out / "detection_metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")
    (out / "detection_metrics.txt").write_text(table)
    sys.stdout.write(table)


def cmd_evaluate_segmentation(args):
    if len(args.pred) != len(args.gt):
        raise InputError("need as many prediction files as ground-truth files")
    preds, gts = [], []
    for p, g in zip(args.pred, args.gt):
        pl, gl = ct.load_labels(p), ct.load_labels(g, args.num_classes)
        if pl.shape != gl.shape:
            raise InputError(f"{p} and {g} differ in size")
        preds.append(pl.values.ravel())
        gts.append(gl.values.ravel())
    scores = ev.pixel_f1(ct.LabelMap(np.concatenate(preds)[None]), ct.LabelMap(np.concatenate(gts)[None]), args.num_classes)
    metrics = {
        "per_class": {str(c): {"precision": float(scores.precision[c]), "recall": float(scores.recall[c]),
                               "f1": float(scores.f1[c]), "present": bool(scores.present[c])}
                      for c in range(args.num_classes)},
        "mean_f1": scores.mean_f1,
    }
    rows = [[c, float(scores.precision[c]), float(scores.recall[c]), float(scores.f1[c])]
            for c in range(args.num_classes) if scores.present[c]]
    rows.append(["mean", "", "", scores.mean_f1])
    table = _table(["class", "prec", "rec", "F1"], rows)
    out = _out(args)
    (out / "segmentation_metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")
    (out / "segmentation_metrics.txt").write_text(table)
    sys.stdout.write(table)


def cmd_split(args):
    index = ev.DatasetIndex.from_json(_read_json(args.index))
    folds = ev.stratified_folds(index, args.k, args.seed)
    (_out(args) / "folds.json").write_text(json.dumps(folds, indent=1) + "\n")


def cmd_pipeline(args):
    summary = run_pipeline(args.scene, args.out, _config(args))
    total = sum(s["seconds"] for s in summary["stages"])
    log.info("pipeline finished in %.2f s", total)


def cmd_synth(args):
    spec = _read_json(args.spec) if args.spec else default_scene_spec()
    make_synthetic_scene(spec, args.out, args.seed)


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="pipeline config JSON")
    p.add_argument("--out", default=d("."), help="output directory")
    p.add_argument("--threads", type=int, default=d(1), help="accepted for compatibility; computation is vectorized numpy")
    p.add_argument("--seed", type=int, default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgbd-perception", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("fuse", cmd_fuse, "reproject and fuse depth streams")
    p.add_argument("--depth", nargs="+", required=True)
    p.add_argument("--camera", nargs="+", required=True)
    p.add_argument("--reference", help="camera JSON of the common frame (default: first camera)")
    p.add_argument("--alphas", nargs="+", type=float)

    p = add("densify", cmd_densify, "TGV densification of a fused depth map")
    p.add_argument("--depth", required=True)
    p.add_argument("--weight", required=True)
    p.add_argument("--rgb", required=True)

    p = add("hha", cmd_hha, "HHA (or raw 3-channel) depth encoding")
    p.add_argument("--depth", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--raw3", action="store_true")

    p = add("propose", cmd_propose, "RGB-D connected-component proposals")
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--regions", action="store_true", help="also write regions.png")

    p = add("combine", cmd_combine, "combine detections with a segmentation posterior")
    p.add_argument("--detections", required=True)
    p.add_argument("--seg", required=True, help="stem path; reads <stem>_c<k>.pfm")
    p.add_argument("--mode", choices=["gaussian", "box"])
    p.add_argument("--min-prob", type=float)

    p = add("evaluate-detections", cmd_evaluate_detections, "mAP and location F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)

    p = add("evaluate-segmentation", cmd_evaluate_segmentation, "pixel-level F1")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--num-classes", type=int, required=True)

    p = add("split", cmd_split, "iterative stratified k-fold assignment")
    p.add_argument("--index", required=True)
    p.add_argument("--k", type=int, default=5)

    p = add("pipeline", cmd_pipeline, "run all stages on a scene directory")
    p.add_argument("--scene", required=True)

    p = add("synth", cmd_synth, "write a synthetic scene directory")
    p.add_argument("--spec", help="scene spec JSON (default: built-in scene)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (InputError, MissingInputError, FileNotFoundError, ct.FormatError, ev.ClassAbsentError) as e:
        log.error("input error: %s", e)
        return EXIT_INPUT
    except StageError as e:
        log.error("%s", e)
        return EXIT_INPUT if isinstance(e.__cause__, ValueError) else EXIT_INTERNAL
    except ValueError as e:
        log.error("input error: %s", e)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        log.exception("internal error: %s", e)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
