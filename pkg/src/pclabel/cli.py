"""Command-line surface: synth | pseudo | refine | stlp | infer | eval | sweep.

Commands read a JSON config file (--config) and/or flags; flags win. All
randomness flows from --seed. Exit codes: 0 success, 1 usage error, 2 data
error. With --json the only stdout output is machine-readable JSON;
informational messages always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import List, Optional

import numpy as np

from . import benchmark as bench
from .labels import LabelField
from .metrics import format_report, labeled_rate, metrics_report
from .ply import load_labeled_ply, load_ply, save_ply
from .pointcloud import build_index, estimate_normals
from .projection import pseudo_labels_from_logits, pseudo_labels_from_views
from .refine import RefineParams, refine_pipeline
from .stlp import StlpConfig, infer, stlp_run
from .superpoint import load_partition_json, oversegment, save_partition_json
from .synth import corrupt_logits, generate_scene, render_views
from . import tensorio


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit code 1.
    def error(self, message):
        raise UsageError(message)


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(payload: dict, as_json: bool, text: Optional[str] = None) -> None:
    if as_json:
        print(json.dumps(payload, sort_keys=True))
    elif text is not None:
        print(text)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    base = os.path.dirname(os.path.abspath(path))
    for key, value in list(config.items()):
        if key in _PATH_KEYS and isinstance(value, str):
            config[key] = os.path.join(base, value)
    return config


_PATH_KEYS = {"cloud", "logits", "views", "mask", "classes", "partition", "gt", "out"}

_DEFAULTS = {
    "top_v": 30.0,
    "alpha": 0.5,
    "rounds": 2,
    "angle_threshold": 15.0,
    "adjacency_k": 10,
    "min_size": 20,
    "normals_k": 16,
    "knn_k": 15,
    "color_weight": 0.5,
    "knn_smoothing": 0.05,
    "knn_confidence_scale": 0.1,
    "update": "retained",
    "seed": 0,
    "occlusion_tolerance": None,
}


def _setting(args, config: dict, key: str):
    """Flag wins over config file wins over default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return _DEFAULTS.get(key)


def _path_setting(args, config: dict, key: str, required: bool = False):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key)
    if value is None and required:
        raise UsageError(f"missing required input --{key.replace('_', '-')}")
    return value


def _load_cloud_and_classes(args, config):
    cloud_path = _path_setting(args, config, "cloud", required=True)
    classes_path = _path_setting(args, config, "classes", required=True)
    cloud = load_ply(cloud_path)
    class_names = tensorio.load_class_names(classes_path)
    return cloud, class_names


def _load_mask(args, config, class_names):
    mask_path = _path_setting(args, config, "mask")
    if mask_path is None:
        return np.ones(len(class_names), dtype=bool)
    return tensorio.load_scene_mask(mask_path, class_names)


def _partition_for(args, config, cloud):
    part_path = _path_setting(args, config, "partition")
    if part_path is not None:
        partition = load_partition_json(part_path)
        if len(partition) != cloud.count:
            raise ValueError(
                f"partition covers {len(partition)} points, cloud has {cloud.count}"
            )
        return partition
    index = build_index(cloud)
    normals = estimate_normals(cloud, index, int(_setting(args, config, "normals_k")))
    return oversegment(
        cloud,
        normals,
        index,
        float(_setting(args, config, "angle_threshold")),
        int(_setting(args, config, "adjacency_k")),
        int(_setting(args, config, "min_size")),
    )


def _refine_params(args, config) -> RefineParams:
    return RefineParams(
        top_v=float(_setting(args, config, "top_v")),
        alpha=float(_setting(args, config, "alpha")),
    )


def _stlp_config(args, config) -> StlpConfig:
    return StlpConfig(
        rounds=int(_setting(args, config, "rounds")),
        refine=_refine_params(args, config),
        knn_k=int(_setting(args, config, "knn_k")),
        color_weight=float(_setting(args, config, "color_weight")),
        knn_smoothing=float(_setting(args, config, "knn_smoothing")),
        knn_confidence_scale=float(_setting(args, config, "knn_confidence_scale")),
        seed=int(_setting(args, config, "seed")),
        update=str(_setting(args, config, "update")),
    )


def _pseudo_labels(args, config, cloud, class_names, mask):
    """Initial labels from a point-logit tensor or a view manifest."""
    logits_path = _path_setting(args, config, "logits")
    views_path = _path_setting(args, config, "views")
    if (logits_path is None) == (views_path is None):
        raise UsageError("exactly one of --logits / --views is required")
    if logits_path is not None:
        logits = tensorio.load_tensor(logits_path)
        if logits.shape[0] != cloud.count:
            raise ValueError(
                f"logits cover {logits.shape[0]} points, cloud has {cloud.count}"
            )
        if logits.shape[1] != len(class_names):
            raise ValueError(
                f"logits have {logits.shape[1]} classes, class list has {len(class_names)}"
            )
        labels, confidence = pseudo_labels_from_logits(logits, mask)
        return labels, confidence, None
    views = tensorio.load_views(views_path)
    occl = _setting(args, config, "occlusion_tolerance")
    labels, confidence, hits = pseudo_labels_from_views(
        cloud, views, mask, occlusion_tolerance=occl
    )
    return labels, confidence, hits


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    preset = bench.get_benchmark(args.preset)
    seed = int(_setting(args, config, "seed"))
    scene = preset.scene_for(seed)
    out = args.out
    os.makedirs(out, exist_ok=True)
    cloud, gt, mask, _ = generate_scene(scene)
    logits = corrupt_logits(gt, cloud, preset.noise_for(seed))
    views = render_views(cloud, logits, preset.ring)
    save_ply(cloud, os.path.join(out, "cloud.ply"))
    save_ply(cloud, os.path.join(out, "gt.ply"), labels=gt)
    tensorio.save_scene_mask(os.path.join(out, "mask.json"), mask, scene.class_names)
    tensorio.save_class_names(os.path.join(out, "classes.json"), scene.class_names)
    tensorio.save_tensor(os.path.join(out, "logits.lf01"), logits)
    tensorio.save_views(os.path.join(out, "views"), views)
    _info(f"wrote scene fixtures for seed {seed} to {out}")
    _emit({"out": out, "points": cloud.count, "seed": seed}, args.json)
    return 0


def cmd_pseudo(args) -> int:
    config = _load_config(args.config)
    cloud, class_names = _load_cloud_and_classes(args, config)
    mask = _load_mask(args, config, class_names)
    labels, confidence, hits = _pseudo_labels(args, config, cloud, class_names, mask)
    os.makedirs(args.out, exist_ok=True)
    tensorio.save_labels_text(os.path.join(args.out, "labels.txt"), labels)
    tensorio.save_confidence(os.path.join(args.out, "confidence.lf01"), confidence)
    record = {
        "out": args.out,
        "labeled_rate": labeled_rate(labels),
        "points": cloud.count,
    }
    if hits is not None:
        record["hit_rate"] = float((hits > 0).mean())
    _info(f"pseudo labels written to {args.out} (labeled rate {record['labeled_rate']:.4f})")
    _emit(record, args.json)
    return 0


def cmd_refine(args) -> int:
    config = _load_config(args.config)
    cloud, class_names = _load_cloud_and_classes(args, config)
    labels = tensorio.load_labels_text(
        _path_setting(args, config, "labels", required=True), len(class_names)
    )
    confidence = tensorio.load_confidence(
        _path_setting(args, config, "confidence", required=True)
    )
    if len(labels) != cloud.count:
        raise ValueError(f"{len(labels)} labels for {cloud.count} points")
    partition = _partition_for(args, config, cloud)
    params = _refine_params(args, config)
    refined = refine_pipeline(labels, confidence, partition, params)
    os.makedirs(args.out, exist_ok=True)
    tensorio.save_labels_text(os.path.join(args.out, "refined_labels.txt"), refined)
    save_partition_json(partition, os.path.join(args.out, "partition.json"))
    record = {"out": args.out, "labeled_rate": labeled_rate(refined),
              "segments": partition.segment_count}
    _info(f"refined labels written to {args.out} (labeled rate {record['labeled_rate']:.4f})")
    _emit(record, args.json)
    return 0


def _run_stlp(args, config):
    cloud, class_names = _load_cloud_and_classes(args, config)
    mask = _load_mask(args, config, class_names)
    labels, confidence, _ = _pseudo_labels(args, config, cloud, class_names, mask)
    partition = _partition_for(args, config, cloud)
    params = _refine_params(args, config)
    stlp_config = _stlp_config(args, config)
    refined = refine_pipeline(labels, confidence, partition, params)
    gt = None
    gt_path = _path_setting(args, config, "gt")
    if gt_path is not None:
        _, gt_values = load_labeled_ply(gt_path)
        if gt_values is None:
            raise ValueError(f"{gt_path} has no label channel")
        gt = LabelField(gt_values, len(class_names))
    final, classifier, report = stlp_run(
        cloud, refined, partition, stlp_config, mask, gt=gt
    )
    return cloud, class_names, partition, final, classifier, report, stlp_config


def cmd_stlp(args) -> int:
    config = _load_config(args.config)
    cloud, class_names, partition, final, classifier, report, stlp_config = _run_stlp(args, config)
    os.makedirs(args.out, exist_ok=True)
    tensorio.save_labels_text(os.path.join(args.out, "labels.txt"), final)
    tensorio.save_report_jsonl(os.path.join(args.out, "report.jsonl"), report)
    record = {
        "out": args.out,
        "rounds": stlp_config.rounds,
        "labeled_rate": labeled_rate(final),
    }
    _info(f"self-training finished: {stlp_config.rounds} rounds, "
          f"labeled rate {record['labeled_rate']:.4f}")
    _emit(record, args.json)
    return 0


def cmd_infer(args) -> int:
    config = _load_config(args.config)
    cloud, class_names = _load_cloud_and_classes(args, config)
    labels = tensorio.load_labels_text(
        _path_setting(args, config, "labels", required=True), len(class_names)
    )
    if len(labels) != cloud.count:
        raise ValueError(f"{len(labels)} labels for {cloud.count} points")
    partition = _partition_for(args, config, cloud)
    stlp_config = _stlp_config(args, config)
    classifier = stlp_config.make_classifier().fit(cloud, labels)
    predicted = infer(
        cloud, classifier, partition, float(_setting(args, config, "alpha")),
        keep_rejected=not args.emit_unlabeled,
    )
    os.makedirs(args.out, exist_ok=True)
    tensorio.save_labels_text(os.path.join(args.out, "pred_labels.txt"), predicted)
    record = {"out": args.out, "labeled_rate": labeled_rate(predicted)}
    _info(f"predictions written to {args.out}")
    _emit(record, args.json)
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    class_names = tensorio.load_class_names(
        _path_setting(args, config, "classes", required=True)
    )
    pred = tensorio.load_labels_text(
        _path_setting(args, config, "pred", required=True), len(class_names)
    )
    gt_path = _path_setting(args, config, "gt", required=True)
    if gt_path.endswith(".ply"):
        _, gt_values = load_labeled_ply(gt_path)
        if gt_values is None:
            raise ValueError(f"{gt_path} has no label channel")
        gt = LabelField(gt_values, len(class_names))
    else:
        gt = tensorio.load_labels_text(gt_path, len(class_names))
    report = metrics_report(pred, gt, class_names)
    _emit(report, args.json, text=format_report(report))
    return 0


def _sweep_value(task):
    preset_name, seed, param, value = task
    preset = bench.get_benchmark(preset_name)
    if param == "V":
        preset = replace(preset, refine=replace(preset.refine, top_v=value))
    elif param == "alpha":
        preset = replace(preset, refine=replace(preset.refine, alpha=value))
    else:
        preset = replace(preset, stlp=replace(preset.stlp, rounds=int(value)))
    record = bench.run_benchmark(preset, seed)
    return {
        "value": value,
        "miou": record["val_miou"],
        "macc": record["val_macc"],
        "labeled_rate": record["final_labeled_rate"],
    }


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    seed = int(_setting(args, config, "seed"))
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid {args.grid!r}: expected comma-separated numbers")
    if not grid:
        raise UsageError("empty sweep grid")
    tasks = [(args.preset, seed, args.param, value) for value in grid]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_value, tasks))
    else:
        rows = [_sweep_value(t) for t in tasks]
    header = {"V": "top_v", "alpha": "alpha", "T": "rounds"}[args.param]
    lines = [f"{header},miou,macc,labeled_rate"]
    for row in rows:
        value = int(row["value"]) if args.param == "T" else row["value"]
        lines.append(f"{value},{row['miou']:.6f},{row['macc']:.6f},{row['labeled_rate']:.6f}")
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as f:
            f.write(csv_text)
        _info(f"sweep written to {args.out}")
        _emit({"out": args.out, "rows": len(rows)}, args.json)
    else:
        print(csv_text, end="")
    return 0


def _add_common(sub, *, needs_out=True):
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--seed", type=int, help="seed for all stochastic stages")
    sub.add_argument("--jobs", type=int, default=1,
                     help="parallel workers across scenes/seeds")
    sub.add_argument("--json", action="store_true",
                     help="machine-readable JSON on stdout")
    if needs_out:
        sub.add_argument("--out", help="output directory", required=False)


def _add_pipeline_flags(sub):
    sub.add_argument("--cloud", help="input cloud (PLY)")
    sub.add_argument("--classes", help="class list JSON")
    sub.add_argument("--mask", help="scene mask JSON (class names present)")
    sub.add_argument("--partition", help="precomputed partition JSON")
    sub.add_argument("--top-v", dest="top_v", type=float, help="CALR percentage (default 30)")
    sub.add_argument("--alpha", type=float, help="GALR overlap threshold (default 0.5)")
    sub.add_argument("--angle-threshold", dest="angle_threshold", type=float,
                     help="over-segmentation angle in degrees (default 15)")
    sub.add_argument("--adjacency-k", dest="adjacency_k", type=int)
    sub.add_argument("--min-size", dest="min_size", type=int)
    sub.add_argument("--normals-k", dest="normals_k", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="pclabel", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("synth", help="generate a synthetic scene fixture")
    p.add_argument("--preset", default="room-small")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser("pseudo", help="initial labels from logits or views")
    _add_pipeline_flags(p)
    p.add_argument("--logits", help="point logits (LF01)")
    p.add_argument("--views", help="view manifest JSON")
    p.add_argument("--occlusion-tolerance", dest="occlusion_tolerance", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_pseudo)

    p = commands.add_parser("refine", help="class-aware + geometry-aware refinement")
    _add_pipeline_flags(p)
    p.add_argument("--labels", help="label listing (text)")
    p.add_argument("--confidence", help="confidence tensor (LF01, one column)")
    _add_common(p)
    p.set_defaults(func=cmd_refine)

    p = commands.add_parser("stlp", help="full pipeline + self-training rounds")
    _add_pipeline_flags(p)
    p.add_argument("--logits", help="point logits (LF01)")
    p.add_argument("--views", help="view manifest JSON")
    p.add_argument("--occlusion-tolerance", dest="occlusion_tolerance", type=float)
    p.add_argument("--gt", help="ground-truth PLY with label channel (for the report)")
    p.add_argument("--rounds", type=int, help="self-training rounds (default 2)")
    p.add_argument("--knn-k", dest="knn_k", type=int)
    p.add_argument("--color-weight", dest="color_weight", type=float)
    p.add_argument("--knn-smoothing", dest="knn_smoothing", type=float)
    p.add_argument("--knn-confidence-scale", dest="knn_confidence_scale", type=float)
    p.add_argument("--update", choices=("retained", "full"))
    _add_common(p)
    p.set_defaults(func=cmd_stlp)

    p = commands.add_parser("infer", help="fit on labels, predict everywhere, GALR post-process")
    _add_pipeline_flags(p)
    p.add_argument("--labels", help="training label listing (text)")
    p.add_argument("--knn-k", dest="knn_k", type=int)
    p.add_argument("--color-weight", dest="color_weight", type=float)
    p.add_argument("--knn-smoothing", dest="knn_smoothing", type=float)
    p.add_argument("--knn-confidence-scale", dest="knn_confidence_scale", type=float)
    p.add_argument("--emit-unlabeled", action="store_true",
                   help="leave blocks failing the vote unlabeled")
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = commands.add_parser("eval", help="metric report for predictions vs ground truth")
    p.add_argument("--pred", help="predicted label listing (text)")
    p.add_argument("--gt", help="ground truth (label PLY or text listing)")
    p.add_argument("--classes", help="class list JSON")
    _add_common(p, needs_out=False)
    p.set_defaults(func=cmd_eval)

    p = commands.add_parser("sweep", help="hyperparameter sweep on the benchmark preset")
    p.add_argument("--param", choices=("V", "alpha", "T"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--preset", default="room-small")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for cmd_needing_out in ("synth", "pseudo", "refine", "stlp", "infer"):
            if args.command == cmd_needing_out and not args.out:
                raise UsageError(f"{cmd_needing_out} requires --out")
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
