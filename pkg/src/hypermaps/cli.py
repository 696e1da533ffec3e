"""Command-line entry points.

Subcommands: synth, train, predict, eval, run, render, ablate.
Exit codes: 0 success, 2 validation failure (bad arguments, config or
manifest), 3 data error (missing or corrupt files).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np
from PIL import Image

from . import classifier, masks, pipeline, synthetic, tensor_store
from .config import PipelineConfig, config_from_dict, load_config, save_config
from .errors import DataError, ValidationError


def _write_text(path, text: str) -> None:
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, os.fspath(path))


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON; flags below override it")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--scales", help="comma-separated patch sizes, e.g. 30,50,70")
    p.add_argument("--base-size", type=int, dest="base_size")
    p.add_argument("--offset", help="grid stride, e.g. 10,10")
    p.add_argument("--seed", type=int)
    p.add_argument("--svm-c", type=float, dest="svm_c")
    p.add_argument("--svm-epochs", type=int, dest="svm_epochs")
    for knob in ("weighted", "normalized", "augment", "per-scale-classifier"):
        dest = knob.replace("-", "_")
        group = p.add_mutually_exclusive_group()
        group.add_argument(f"--{knob}", dest=dest, action="store_true", default=None)
        group.add_argument(f"--no-{knob}", dest=dest, action="store_false", default=None)


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    doc = cfg.to_dict()
    if args.sigma2 is not None:
        doc["sigma2"] = args.sigma2
    if args.scales is not None:
        doc["scales"] = [int(v) for v in args.scales.split(",")]
    if args.base_size is not None:
        doc["base_size"] = args.base_size
    if args.offset is not None:
        doc["offset"] = [int(v) for v in args.offset.split(",")]
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.svm_c is not None:
        doc["svm"]["C"] = args.svm_c
    if args.svm_epochs is not None:
        doc["svm"]["epochs"] = args.svm_epochs
    for knob in ("weighted", "normalized", "augment", "per_scale_classifier"):
        value = getattr(args, knob)
        if value is not None:
            doc[knob] = value
    return config_from_dict(doc)


def cmd_synth(args) -> int:
    if args.preset not in synthetic.PRESETS:
        raise ValidationError(f"unknown preset {args.preset!r}")
    spec, params = synthetic.PRESETS[args.preset]
    if args.seed is not None:
        params = dataclasses.replace(params, seed=args.seed)
    if args.images_per_fold is not None:
        params = dataclasses.replace(params, images_per_fold=args.images_per_fold)
    manifest_path = synthetic.generate_dataset(args.out, spec, params)
    print(manifest_path)
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    manifest = tensor_store.load_manifest(args.manifest)
    violations = tensor_store.validate_manifest(manifest)
    if violations:
        raise ValidationError("; ".join(str(v) for v in violations))
    model, ts = pipeline.train_fold_models(manifest, args.fold, cfg)
    if isinstance(model, dict):
        for scale, m in model.items():
            classifier.save_model(m, f"{args.out}.scale{scale}")
        print(f"saved {len(model)} per-scale models to {args.out}.scale*")
    else:
        classifier.save_model(model, args.out)
        print(f"saved model to {args.out}")
    counts = " ".join(f"{k}={v}" for k, v in ts.class_counts().items())
    print(f"fold {args.fold}: base={len(ts.base_samples)} samples={len(ts.samples)} {counts}")
    return 0


def _find_entry(manifest, image_id):
    for entry in manifest.entries:
        if entry.image_id == image_id:
            return entry
    raise ValidationError(f"no manifest entry with image_id {image_id!r}")


def cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    manifest = tensor_store.load_manifest(args.manifest)
    entry = _find_entry(manifest, args.image_id)
    if entry.change_mask_path is None:
        raise DataError(f"entry {entry.image_id} has no change mask")
    from .featuremaps import load_stack

    stack = load_stack(entry, manifest)
    change = masks.read_change_mask(manifest.resolve(entry.change_mask_path))
    model = classifier.load_model(args.model)
    pred = pipeline.label_change_regions(stack, change, model, cfg)
    masks.write_mask(pred, args.out)
    print(f"wrote {args.out}")
    if args.overlay:
        masks.save_overlay(pred, args.overlay)
        print(f"wrote {args.overlay}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    pred = masks.read_label_mask(args.pred)
    truth = masks.read_label_mask(args.truth)
    report = pipeline.evaluate(pred, truth, fold=args.fold, config=cfg)
    text = pipeline.render_report(report)
    print(text, end="")
    if args.report:
        _write_text(args.report, text)
    if args.csv:
        _write_text(args.csv, pipeline.reports_csv([report]))
    return 0


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    manifest = tensor_store.load_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    log_lines: list = []
    predictions: dict = {}
    r0, r1 = pipeline.cross_time_run(
        manifest, cfg, log_lines=log_lines, predictions_out=predictions
    )
    for image_id, pred in predictions.items():
        masks.write_mask(pred, os.path.join(args.out_dir, f"pred_{image_id}.png"))
    _write_text(os.path.join(args.out_dir, "report_t0.txt"), pipeline.render_report(r0))
    _write_text(os.path.join(args.out_dir, "report_t1.txt"), pipeline.render_report(r1))
    _write_text(os.path.join(args.out_dir, "reports.csv"), pipeline.reports_csv([r0, r1]))
    table = pipeline.render_comparison([(r0.approach, r0.overall_acc, r1.overall_acc)])
    _write_text(os.path.join(args.out_dir, "comparison.txt"), table)
    _write_text(os.path.join(args.out_dir, "run.log"), "\n".join(log_lines) + "\n")
    save_config(cfg, os.path.join(args.out_dir, "config.json"))
    print(table, end="")
    return 0


def cmd_render(args) -> int:
    labels = masks.read_label_mask(args.labels)
    base = None
    if args.base:
        base = np.asarray(Image.open(args.base).convert("RGB"))
    masks.save_overlay(labels, args.out, base_image=base)
    print(f"wrote {args.out}")
    return 0


def cmd_ablate(args) -> int:
    base = _config_from_args(args)
    manifest = tensor_store.load_manifest(args.manifest)
    os.makedirs(args.out_dir, exist_ok=True)
    cache: dict = {}
    sections = []
    reports = []

    def run_row(label, cfg):
        r0, r1 = pipeline.cross_time_run(manifest, cfg, model_cache=cache)
        reports.extend([r0, r1])
        return (label, r0.overall_acc, r1.overall_acc)

    def vary(**kw):
        return config_from_dict({**base.to_dict(), **kw})

    rows = [run_row("with augmentation (x18)", vary(augment=True)),
            run_row("without augmentation", vary(augment=False))]
    sections.append(("data augmentation", rows))

    rows = [run_row("with weighted value", vary(weighted=True)),
            run_row("without weighted value", vary(weighted=False))]
    sections.append(("weighted accumulation", rows))

    sigma_list = [float(v) for v in args.sigma2_list.split(",")]
    rows = [run_row(f"sigma2 = {s:g}", vary(sigma2=s)) for s in sigma_list]
    sections.append(("gaussian variance", rows))

    scale_sets = [tuple(int(v) for v in group.split(","))
                  for group in args.scale_sets.split(";")]
    rows = [run_row("scales {" + ",".join(map(str, ss)) + "}", vary(scales=list(ss)))
            for ss in scale_sets]
    sections.append(("scale sets", rows))

    blocks = []
    for title, rows in sections:
        blocks.append(f"# {title}\n" + pipeline.render_comparison(rows))
    text = "\n".join(blocks)
    _write_text(os.path.join(args.out_dir, "ablation.txt"), text)
    _write_text(os.path.join(args.out_dir, "ablation.csv"), pipeline.reports_csv(reports))
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypermaps",
        description="semantic labeling of changed areas with hypermap descriptors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-fold dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", default="default", choices=sorted(synthetic.PRESETS))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--images-per-fold", type=int, default=None, dest="images_per_fold")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the classifier on one fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fold", required=True, choices=tensor_store.TIME_TAGS)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label the changed areas of one image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-id", required=True, dest="image_id")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay")
    _add_config_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a predicted mask against the truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--fold", default="?")
    p.add_argument("--report")
    p.add_argument("--csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="cross-time train/test on both folds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="render a label mask as a colored overlay")
    p.add_argument("--labels", required=True)
    p.add_argument("--base")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("ablate", help="sweep the tuning knobs and tabulate accuracy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--sigma2-list", default="100,300,1000", dest="sigma2_list")
    p.add_argument("--scale-sets", default="30,50,70;30;50;70", dest="scale_sets")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
