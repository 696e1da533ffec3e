"""End-to-end orchestration over a dataset manifest.

Training: labeled patches are sampled on the evaluation grid (one patch
per stride cell whose center pixel carries a label), optionally expanded
x18 by augmentation, turned into descriptors at the base patch size and
fed to the linear SVM.

Testing: evaluation centers sit on the same stride grid restricted to
the change mask; each center's multi-scale vote labels the changed
pixels of its cell, so predictions cover exactly the changed area.

Cross-time protocol: the fold tested is never the fold trained on
(t0 predictions come from the t1-trained model and vice versa).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import masks
from .augmentation import PatchSample, augment
from .classifier import train
from .config import PipelineConfig
from .descriptors import GaussianParams, PatchSpec, hypermap_descriptor
from .errors import ValidationError
from .featuremaps import FeatureStack, load_stack
from .masks import CLASS_NAMES, IGNORE, render_overlay  # re-exported
from .multiscale import multiscale_label
from .tensor_store import DatasetManifest, validate_manifest

logger = logging.getLogger(__name__)

__all__ = [
    "EvalReport", "TrainingSet", "build_training_set", "train_fold_models",
    "label_change_regions", "evaluation_cells", "confusion_matrix", "evaluate",
    "report_from_confusion", "cross_time_run", "render_report", "render_comparison",
    "reports_csv", "render_overlay",
]


def sample_descriptor(stack: FeatureStack, sample: PatchSample, config: PipelineConfig):
    return hypermap_descriptor(
        stack, sample.patch,
        params=GaussianParams(config.sigma2) if config.weighted else None,
        weighted=config.weighted, normalized=config.normalized,
        layout=config.layout, hflip=sample.hflip,
    )


@dataclass
class TrainingSet:
    fold: str
    base_samples: list  # PatchSample, pre-augmentation
    samples: list  # PatchSample, post-augmentation
    descriptors: np.ndarray  # n x D float32
    labels: np.ndarray  # n

    def class_counts(self) -> dict:
        counts = {name: 0 for name in CLASS_NAMES}
        for s in self.base_samples:
            counts[CLASS_NAMES[s.label]] += 1
        return counts


def grid_centers(image_size, offset):
    """Stride-cell centers (cx, cy, cell rows slice, cell cols slice)."""
    h, w = image_size
    dx, dy = offset
    for iy in range((h + dy - 1) // dy):
        for ix in range((w + dx - 1) // dx):
            rows = slice(iy * dy, min((iy + 1) * dy, h))
            cols = slice(ix * dx, min((ix + 1) * dx, w))
            cy = min(iy * dy + dy // 2, h - 1)
            cx = min(ix * dx + dx // 2, w - 1)
            yield cx, cy, rows, cols


def build_training_set(manifest: DatasetManifest, fold: str, config: PipelineConfig,
                       base_size: int | None = None) -> TrainingSet:
    """Collect labeled patches of one fold and turn them into descriptors."""
    entries = manifest.fold(fold)
    if not entries:
        raise ValidationError(f"manifest has no entries for fold {fold!r}")
    size = base_size or config.base_size
    base_samples = []
    all_samples = []
    rows = []
    labels = []
    for entry in entries:
        if entry.label_mask_path is None:
            raise ValidationError(f"entry {entry.image_id} has no label mask")
        label_mask = masks.read_label_mask(manifest.resolve(entry.label_mask_path))
        if label_mask.shape != tuple(entry.image_size):
            raise ValidationError(
                f"label mask of {entry.image_id} is {label_mask.shape}, "
                f"expected {tuple(entry.image_size)}"
            )
        stack = load_stack(entry, manifest)
        entry_base = []
        for cx, cy, _rows, _cols in grid_centers(entry.image_size, config.offset):
            value = int(label_mask[cy, cx])
            if value == IGNORE:
                continue
            entry_base.append(PatchSample(
                image_id=entry.image_id, time_tag=fold,
                patch=PatchSpec(cx, cy, size), label=value,
            ))
        base_samples.extend(entry_base)
        for base in entry_base:
            variants = augment(base) if config.augment else [base]
            for s in variants:
                d = sample_descriptor(stack, s, config)
                rows.append(d.values.astype(np.float32))
                labels.append(s.label)
                all_samples.append(s)
    if not base_samples:
        raise ValidationError(f"fold {fold!r} has no labeled pixels on the sampling grid")
    return TrainingSet(
        fold=fold,
        base_samples=base_samples,
        samples=all_samples,
        descriptors=np.asarray(rows, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
    )


def train_fold_models(manifest: DatasetManifest, fold: str, config: PipelineConfig):
    """Train the classifier(s) for one fold: a single model shared across
    scales, or one per scale when configured."""
    if not config.per_scale_classifier:
        ts = build_training_set(manifest, fold, config)
        model = train(list(zip(ts.descriptors, ts.labels)), config.svm)
        return model, ts
    models = {}
    ts = None
    for scale in config.scales:
        ts = build_training_set(manifest, fold, config, base_size=scale)
        models[scale] = train(list(zip(ts.descriptors, ts.labels)), config.svm)
    return models, ts


def evaluation_cells(change_mask: np.ndarray, offset):
    """Grid cells containing at least one changed pixel."""
    for cx, cy, rows, cols in grid_centers(change_mask.shape, offset):
        if change_mask[rows, cols].any():
            yield cx, cy, rows, cols


def label_change_regions(stack: FeatureStack, change_mask: np.ndarray, model,
                         config: PipelineConfig) -> np.ndarray:
    """Multi-scale vote at every changed grid cell; unchanged pixels stay 255."""
    change_mask = np.asarray(change_mask, dtype=bool)
    if change_mask.shape != tuple(stack.image_size):
        raise ValidationError(
            f"change mask {change_mask.shape} does not match image {stack.image_size}"
        )
    out = masks.new_label_mask(stack.image_size)
    if not change_mask.any():
        logger.warning("change mask of %s is empty; nothing to label", stack.image_id)
        return out
    for cx, cy, rows, cols in evaluation_cells(change_mask, config.offset):
        record = multiscale_label(
            stack, (cx, cy), config.scale_set, model,
            sigma2=config.sigma2, weighted=config.weighted,
            normalized=config.normalized, layout=config.layout,
        )
        cell = out[rows, cols]  # view
        cell[change_mask[rows, cols]] = record.label
    return out


@dataclass
class EvalReport:
    fold: str
    per_class_acc: tuple  # percent, one per class
    overall_acc: float  # percent
    confusion: np.ndarray  # K x K, rows = truth, cols = predicted
    fingerprint: str
    approach: str
    config: dict


def confusion_matrix(pred: np.ndarray, truth: np.ndarray,
                     n_classes: int = len(CLASS_NAMES)) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    labeled = truth != IGNORE
    if not labeled.any():
        raise ValidationError("truth mask has no labeled pixels")
    t = truth[labeled].astype(np.int64)
    p = pred[labeled].astype(np.int64)
    if (t >= n_classes).any():
        raise ValidationError("truth mask contains out-of-range labels")
    if (p == IGNORE).any():
        raise ValidationError(
            f"{int((p == IGNORE).sum())} truth-labeled pixels left unpredicted"
        )
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (t, p), 1)
    return matrix


def report_from_confusion(matrix: np.ndarray, fold: str = "?",
                          config: PipelineConfig | None = None) -> EvalReport:
    matrix = np.asarray(matrix, dtype=np.int64)
    total = int(matrix.sum())
    if total == 0:
        raise ValidationError("empty confusion matrix")
    row_sums = matrix.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(row_sums > 0, np.diag(matrix) / np.maximum(row_sums, 1), np.nan)
    overall = float(np.trace(matrix)) / total
    return EvalReport(
        fold=fold,
        per_class_acc=tuple(100.0 * v for v in per_class),
        overall_acc=100.0 * overall,
        confusion=matrix,
        fingerprint=config.fingerprint() if config else "",
        approach=config.approach_name() if config else "",
        config=config.to_dict() if config else {},
    )


def evaluate(pred: np.ndarray, truth: np.ndarray, fold: str = "?",
             config: PipelineConfig | None = None) -> EvalReport:
    """Accuracy over the pixels the truth mask labels."""
    return report_from_confusion(confusion_matrix(pred, truth), fold, config)


def _pct(v: float) -> str:
    return "n/a" if np.isnan(v) else f"{v:.2f}"


def render_report(report: EvalReport) -> str:
    lines = [
        f"approach: {report.approach}",
        f"config: {report.fingerprint}",
        f"fold: {report.fold}",
        f"overall accuracy (%): {_pct(report.overall_acc)}",
    ]
    for name, acc in zip(CLASS_NAMES, report.per_class_acc):
        lines.append(f"{name} accuracy (%): {_pct(acc)}")
    lines.append("confusion (rows = truth, cols = predicted):")
    header = " " * 10 + "".join(f"{n:>10}" for n in CLASS_NAMES)
    lines.append(header)
    for name, row in zip(CLASS_NAMES, report.confusion):
        lines.append(f"{name:<10}" + "".join(f"{int(v):>10}" for v in row))
    return "\n".join(lines) + "\n"


def render_comparison(rows) -> str:
    """Two-column accuracy table: rows of (approach, t0 %, t1 %)."""
    width = max([len("Approach")] + [len(r[0]) for r in rows]) + 2
    lines = [f"{'Approach':<{width}}{'t0 (%)':>10}{'t1 (%)':>10}"]
    for approach, a0, a1 in rows:
        lines.append(f"{approach:<{width}}{_pct(a0):>10}{_pct(a1):>10}")
    return "\n".join(lines) + "\n"


def reports_csv(reports) -> str:
    lines = ["fold,overall_pct," + ",".join(f"{n}_pct" for n in CLASS_NAMES)
             + ",approach,fingerprint"]
    for r in reports:
        per_class = ",".join(repr(float(v)) for v in r.per_class_acc)
        lines.append(
            f"{r.fold},{float(r.overall_acc)!r},{per_class},{r.approach},{r.fingerprint}"
        )
    return "\n".join(lines) + "\n"


def cross_time_run(manifest: DatasetManifest, config: PipelineConfig,
                   log_lines: list | None = None,
                   predictions_out: dict | None = None,
                   model_cache: dict | None = None):
    """Two swapped train/test executions; returns (report_t0, report_t1).

    The report for fold F evaluates a model trained on the other fold.
    Pass log_lines / predictions_out to collect the run log and the
    per-image predicted masks. model_cache (keyed by fold and the
    training-relevant config fingerprint) lets ablation sweeps reuse
    models across configs that only differ in evaluation knobs.
    """
    violations = validate_manifest(manifest)
    if violations:
        raise ValidationError(
            "manifest is invalid: " + "; ".join(str(v) for v in violations)
        )
    log = log_lines if log_lines is not None else []
    log.append(f"config {config.fingerprint()}")
    reports = {}
    predictions = predictions_out if predictions_out is not None else {}
    for test_fold, train_fold in (("t0", "t1"), ("t1", "t0")):
        if not manifest.fold(test_fold) or not manifest.fold(train_fold):
            raise ValidationError("cross-time run needs both folds populated")
        cache_key = (train_fold, config.training_fingerprint())
        if model_cache is not None and cache_key in model_cache:
            model, ts = model_cache[cache_key]
        else:
            model, ts = train_fold_models(manifest, train_fold, config)
            if model_cache is not None:
                # keep the bookkeeping, drop the big descriptor matrix
                ts = TrainingSet(ts.fold, ts.base_samples, ts.samples,
                                 np.empty((0, 0), dtype=np.float32),
                                 np.empty(0, dtype=np.int64))
                model_cache[cache_key] = (model, ts)
        counts = " ".join(f"{k}={v}" for k, v in ts.class_counts().items())
        log.append(
            f"train {train_fold} base={len(ts.base_samples)} "
            f"samples={len(ts.samples)} {counts}"
        )
        for s in ts.base_samples:
            log.append(f"train-sample {train_fold} {s.sample_id}")
        matrix = np.zeros((len(CLASS_NAMES), len(CLASS_NAMES)), dtype=np.int64)
        for entry in manifest.fold(test_fold):
            stack = load_stack(entry, manifest)
            change = masks.read_change_mask(manifest.resolve(entry.change_mask_path))
            truth = masks.read_label_mask(manifest.resolve(entry.label_mask_path))
            pred = label_change_regions(stack, change, model, config)
            predictions[entry.image_id] = pred
            for cx, cy, _r, _c in evaluation_cells(change, config.offset):
                log.append(f"test-cell {test_fold} {entry.image_id}:{cx},{cy}")
            matrix += confusion_matrix(pred, truth)
        reports[test_fold] = report_from_confusion(matrix, test_fold, config)
        log.append(f"report {test_fold} overall={reports[test_fold].overall_acc!r}")
    return reports["t0"], reports["t1"]
