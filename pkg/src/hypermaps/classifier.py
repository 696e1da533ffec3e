"""One-vs-rest linear SVM over descriptors.

Training minimizes, independently per class c,

    (C/2) ||w_c||^2 + (1/n) sum_i max(0, 1 - y_ic (w_c . x_i + b_c))

by epoch-wise stochastic subgradient descent with step 1/(C * t), where t
counts individual updates and C is the L2 coefficient. The bias is
unregularized. Everything is driven by one seeded RNG (per-epoch sample
shuffles shared by all K subproblems), so retraining with the same
samples, hyperparameters and seed reproduces the weights bit for bit.

Features are standardized per dimension (mean 0, scale 1; constant
dimensions keep scale 1) and the scaler is stored in the model, so a
saved model is self-contained at inference time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor_store
from .errors import ModelFormatError, ValidationError

MODEL_FORMAT = "hypermaps-svm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class SvmHyperparams:
    C: float = 1.0  # L2 regularization coefficient
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValidationError(f"C must be > 0, got {self.C}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class SvmModel:
    n_classes: int
    dim: int
    labels: list  # class index -> original label
    weights: np.ndarray  # K x D, float64
    biases: np.ndarray  # K, float64
    scaler_mean: np.ndarray  # D, float64
    scaler_scale: np.ndarray  # D, float64
    hyperparams: SvmHyperparams = field(default_factory=SvmHyperparams)
    objective_history: list = field(default_factory=list)  # one value per epoch

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.scaler_mean) / self.scaler_scale


def _as_matrix(samples):
    """samples: list of (Descriptor-or-array, label) -> (X float32, y int array)."""
    if len(samples) == 0:
        raise ValidationError("no training samples")
    rows = []
    labels = []
    for d, label in samples:
        values = getattr(d, "values", d)
        rows.append(np.asarray(values, dtype=np.float64))
        labels.append(int(label))
    dim = rows[0].shape[0]
    for r in rows:
        if r.shape != (dim,):
            raise ValidationError(
                f"descriptor length mismatch: {r.shape[0]} != {dim}"
            )
    X = np.asarray(rows, dtype=np.float32)
    if not np.isfinite(X).all():
        raise ValidationError("non-finite descriptor in training set")
    return X, np.asarray(labels, dtype=np.int64)


def fit_scaler(X: np.ndarray):
    mean = X.mean(axis=0, dtype=np.float64)
    std = np.sqrt(np.mean((X.astype(np.float64) - mean) ** 2, axis=0))
    scale = np.where(std > 0.0, std, 1.0)
    return mean, scale


def hinge_objective(W, b, Xs, Y, C) -> float:
    """Summed per-class objective on standardized features; re-check oracle."""
    scores = Xs @ W.T + b  # n x K
    hinge = np.maximum(0.0, 1.0 - Y * scores).mean(axis=0)
    reg = 0.5 * C * np.sum(W * W, axis=1)
    return float(np.sum(reg + hinge))


def train(samples, hyperparams: SvmHyperparams | None = None) -> SvmModel:
    """Train one-vs-rest linear SVMs; deterministic for fixed inputs and seed."""
    hp = hyperparams or SvmHyperparams()
    X, y = _as_matrix(samples)
    classes = sorted(set(int(v) for v in y))
    if len(classes) < 2:
        raise ValidationError(f"need >= 2 classes, got {classes}")
    index_of = {c: i for i, c in enumerate(classes)}
    yi = np.asarray([index_of[int(v)] for v in y], dtype=np.int64)
    n, dim = X.shape
    k = len(classes)

    mean, scale = fit_scaler(X)
    Xs = (X.astype(np.float64) - mean) / scale
    del X
    Y = np.where(yi[:, None] == np.arange(k)[None, :], 1.0, -1.0)  # n x K

    # W is carried as step_scale * V so the per-step L2 shrink is one scalar
    # multiply instead of a K x D scaling. Epochs that do not improve the
    # objective are reverted (the step counter still advances, so the next
    # attempt uses smaller steps); checkpoints are therefore non-increasing
    # by construction and the returned weights are the best visited.
    V = np.zeros((k, dim), dtype=np.float64)
    step_scale = 1.0
    b = np.zeros(k, dtype=np.float64)
    rng = np.random.default_rng(hp.seed)
    history = []
    best = None
    t = 0
    for _epoch in range(hp.epochs):
        order = rng.permutation(n)
        for i in order:
            t += 1
            eta = 1.0 / (hp.C * t)
            x = Xs[i]
            margins = Y[i] * (step_scale * (V @ x) + b)
            # eta * C == 1/t algebraically; use the exact form
            if t == 1:  # the first shrink zeroes W
                V[:] = 0.0
                step_scale = 1.0
            else:
                step_scale *= 1.0 - 1.0 / t
            for c in np.flatnonzero(margins < 1.0):
                step = eta * Y[i, c]
                V[c] += (step / step_scale) * x
                b[c] += step
        obj = hinge_objective(step_scale * V, b, Xs, Y, hp.C)
        if best is None or obj <= best[0]:
            best = (obj, V.copy(), step_scale, b.copy())
        else:
            V = best[1].copy()
            step_scale = best[2]
            b = best[3].copy()
        history.append(best[0])

    return SvmModel(
        n_classes=k,
        dim=dim,
        labels=list(classes),
        weights=best[2] * best[1],
        biases=best[3],
        scaler_mean=mean,
        scaler_scale=scale,
        hyperparams=hp,
        objective_history=history,
    )


def decision_scores(model: SvmModel, d) -> np.ndarray:
    values = getattr(d, "values", d)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (model.dim,):
        raise ValidationError(
            f"descriptor length {values.shape} != model dim {model.dim}"
        )
    xs = model.standardize(values)
    return model.weights @ xs + model.biases


def predict(model: SvmModel, d):
    """Returns (label, scores). Argmax label; ties go to the lowest class index."""
    scores = decision_scores(model, d)
    return model.labels[int(np.argmax(scores))], scores


def predict_batch(model: SvmModel, X: np.ndarray):
    X = np.asarray(X, dtype=np.float64)
    Xs = (X - model.scaler_mean) / model.scaler_scale
    scores = Xs @ model.weights.T + model.biases
    idx = np.argmax(scores, axis=1)
    labels = np.asarray(model.labels, dtype=np.int64)[idx]
    return labels, scores


def save_model(model: SvmModel, path) -> None:
    """JSON header line + four float64 tensor blobs, written atomically."""
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_classes": model.n_classes,
        "dim": model.dim,
        "labels": model.labels,
        "hyperparams": {
            "C": model.hyperparams.C,
            "epochs": model.hyperparams.epochs,
            "seed": model.hyperparams.seed,
        },
        "objective_history": model.objective_history,
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        tensor_store.write_tensor_to(
            fh, (model.n_classes * model.dim,), model.weights.reshape(-1), dtype_code=1
        )
        tensor_store.write_tensor_to(fh, (model.n_classes,), model.biases, dtype_code=1)
        tensor_store.write_tensor_to(fh, (model.dim,), model.scaler_mean, dtype_code=1)
        tensor_store.write_tensor_to(fh, (model.dim,), model.scaler_scale, dtype_code=1)
    os.replace(tmp, path)


def load_model(path) -> SvmModel:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ModelFormatError(f"{path}: corrupt model header") from exc
            if header.get("format") != MODEL_FORMAT:
                raise ModelFormatError(f"{path}: not a model bundle")
            if header.get("version") != MODEL_VERSION:
                raise ModelFormatError(
                    f"{path}: unsupported model version {header.get('version')}"
                )
            k, dim = int(header["n_classes"]), int(header["dim"])
            blobs = []
            for what in ("weights", "biases", "scaler_mean", "scaler_scale"):
                try:
                    _, values = tensor_store.read_tensor_from(fh, name=f"{path}:{what}")
                except tensor_store.TensorFormatError as exc:
                    raise ModelFormatError(f"{path}: corrupt {what} blob: {exc}") from exc
                blobs.append(np.array(values, dtype=np.float64))
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    weights, biases, mean, scale = blobs
    if weights.size != k * dim or biases.size != k or mean.size != dim or scale.size != dim:
        raise ModelFormatError(f"{path}: blob sizes disagree with header")
    hp = header["hyperparams"]
    return SvmModel(
        n_classes=k,
        dim=dim,
        labels=[int(v) for v in header["labels"]],
        weights=weights.reshape(k, dim),
        biases=biases,
        scaler_mean=mean,
        scaler_scale=scale,
        hyperparams=SvmHyperparams(C=hp["C"], epochs=int(hp["epochs"]), seed=int(hp["seed"])),
        objective_history=[float(v) for v in header["objective_history"]],
    )
