"""Pipeline configuration: one key per tunable knob, JSON on disk.

The fingerprint is a sha256 over the canonical JSON encoding; reports
embed both the fingerprint and the full config so any report can be
reproduced exactly from its own metadata.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

from .classifier import SvmHyperparams
from .descriptors import DEFAULT_LAYOUT, LayoutSegment
from .errors import ValidationError
from .multiscale import ScaleSet


@dataclass(frozen=True)
class PipelineConfig:
    sigma2: float = 300.0
    weighted: bool = True
    normalized: bool = True
    augment: bool = True
    scales: tuple = (30, 50, 70)
    base_size: int = 30
    offset: tuple = (10, 10)
    seed: int = 0
    per_scale_classifier: bool = False
    svm_C: float = 1.0
    svm_epochs: int = 50
    layout: tuple = DEFAULT_LAYOUT

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValidationError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.base_size < 1:
            raise ValidationError(f"base_size must be >= 1, got {self.base_size}")
        if len(self.offset) != 2 or any(v < 1 for v in self.offset):
            raise ValidationError(f"offset must be two positive strides: {self.offset}")
        ScaleSet(self.scales)  # validates ordering

    @property
    def scale_set(self) -> ScaleSet:
        return ScaleSet(self.scales)

    @property
    def svm(self) -> SvmHyperparams:
        return SvmHyperparams(C=self.svm_C, epochs=self.svm_epochs, seed=self.seed)

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "weighted": self.weighted,
            "normalized": self.normalized,
            "augment": self.augment,
            "scales": list(self.scales),
            "base_size": self.base_size,
            "offset": list(self.offset),
            "seed": self.seed,
            "per_scale_classifier": self.per_scale_classifier,
            "svm": {"C": self.svm_C, "epochs": self.svm_epochs},
            "layout": [
                {"name": s.name, "channels": s.channels, "kind": "map" if s.accumulate else "flat"}
                for s in self.layout
            ],
        }

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def training_fingerprint(self) -> str:
        """Fingerprint of the keys that affect training. With one classifier
        shared across scales, the scale set is evaluation-only, so configs
        differing only there can share trained models."""
        doc = self.to_dict()
        if not self.per_scale_classifier:
            doc.pop("scales")
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def approach_name(self) -> str:
        scale = "Multi-scale" if len(self.scales) > 1 else f"Single-scale ({self.scales[0]})"
        weight = "Weighted" if self.weighted else "Unweighted"
        return f"{scale} {weight} Hypermaps"


def config_from_dict(doc: dict) -> PipelineConfig:
    try:
        layout = tuple(
            LayoutSegment(seg["name"], int(seg["channels"]), seg.get("kind", "map") == "map")
            for seg in doc.get("layout", [])
        ) or DEFAULT_LAYOUT
        svm = doc.get("svm", {})
        return PipelineConfig(
            sigma2=float(doc.get("sigma2", 300.0)),
            weighted=bool(doc.get("weighted", True)),
            normalized=bool(doc.get("normalized", True)),
            augment=bool(doc.get("augment", True)),
            scales=tuple(int(s) for s in doc.get("scales", (30, 50, 70))),
            base_size=int(doc.get("base_size", 30)),
            offset=tuple(int(v) for v in doc.get("offset", (10, 10))),
            seed=int(doc.get("seed", 0)),
            per_scale_classifier=bool(doc.get("per_scale_classifier", False)),
            svm_C=float(svm.get("C", 1.0)),
            svm_epochs=int(svm.get("epochs", 50)),
            layout=layout,
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"bad config: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def save_config(cfg: PipelineConfig, path) -> None:
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
