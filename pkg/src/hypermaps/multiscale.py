"""Multi-scale patch evaluation and label voting.

The same center is classified at several patch sizes; each scale casts
one vote and the label with the maximum count wins. Ties (unavoidable
with three scales and three labels) are broken by the larger decision
score summed across scales, then by the lowest label index, so the
result is deterministic and independent of scale order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import SvmModel, predict
from .descriptors import GaussianParams, PatchSpec, hypermap_descriptor
from .errors import ValidationError


@dataclass(frozen=True)
class ScaleSet:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0:
            raise ValidationError("scale set must not be empty")
        if any(s < 1 for s in sizes):
            raise ValidationError(f"patch sizes must be >= 1: {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError(f"patch sizes must be strictly increasing: {sizes}")
        object.__setattr__(self, "sizes", sizes)

    def __len__(self):
        return len(self.sizes)


DEFAULT_SCALES = ScaleSet((30, 50, 70))


@dataclass
class VoteRecord:
    per_scale: list  # (size, label, scores) per scale
    counts: np.ndarray  # votes per label index
    label: int  # winning label


def tally_votes(per_scale, n_labels: int) -> VoteRecord:
    """Count per-scale labels and resolve the winner.

    per_scale: list of (size, label, scores) with labels in [0, n_labels)
    and scores indexed by label.
    """
    counts = np.zeros(n_labels, dtype=np.int64)
    summed = np.zeros(n_labels, dtype=np.float64)
    for _size, label, scores in per_scale:
        counts[label] += 1
        summed += np.asarray(scores, dtype=np.float64)
    best = counts.max()
    candidates = [i for i in range(n_labels) if counts[i] == best]
    if len(candidates) > 1:
        top = max(summed[i] for i in candidates)
        candidates = [i for i in candidates if summed[i] == top]
    return VoteRecord(per_scale=list(per_scale), counts=counts, label=candidates[0])


def _model_for(model, size: int) -> SvmModel:
    if isinstance(model, dict):
        if size not in model:
            raise ValidationError(f"no classifier for scale {size}")
        return model[size]
    return model


def single_scale_label(stack, center, size: int, model, sigma2: float = 300.0,
                       weighted: bool = True, normalized: bool = True,
                       layout=None):
    """Classify one center at one patch size; the w/o-multi-scale baseline."""
    from .descriptors import DEFAULT_LAYOUT

    patch = PatchSpec(int(center[0]), int(center[1]), size)
    d = hypermap_descriptor(
        stack, patch,
        params=GaussianParams(sigma2) if weighted else None,
        weighted=weighted, normalized=normalized,
        layout=layout or DEFAULT_LAYOUT,
    )
    return predict(_model_for(model, size), d)


def multiscale_label(stack, center, scales: ScaleSet, model, sigma2: float = 300.0,
                     weighted: bool = True, normalized: bool = True,
                     layout=None) -> VoteRecord:
    """Vote across patch sizes at one center."""
    canonical = _model_for(model, scales.sizes[0]).labels
    indexed = []
    recorded = []
    for size in scales.sizes:
        m = _model_for(model, size)
        if m.labels != canonical:
            raise ValidationError("per-scale classifiers must share one label set")
        label, scores = single_scale_label(
            stack, center, size, m,
            sigma2=sigma2, weighted=weighted, normalized=normalized, layout=layout,
        )
        indexed.append((size, canonical.index(label), scores))
        recorded.append((size, label, scores))
    record = tally_votes(indexed, len(canonical))
    record.per_scale = recorded
    record.label = canonical[record.label]
    return record
