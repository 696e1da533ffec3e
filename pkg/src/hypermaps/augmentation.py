"""Training-patch expansion: 18 variants per labeled sample.

Each source patch yields 9 spatial divisions x 2 horizontal flips:
the original window plus 8 overlapping sub-windows whose centers sit on
a 3x3 grid offset by a quarter of the patch size (half-size windows
half-offset in each direction, re-expanded to the base size). Variant 0
is the untouched original; ordering is (division index, flip flag), so
variant_id = division * 2 + flip.

Flips never touch pixel data here: a flipped variant is extracted by
mirroring the patch geometry, which equals extracting from an actually
flipped feature stack (weights are reflection-symmetric about the patch
center).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .descriptors import PatchSpec
from .errors import ValidationError

N_VARIANTS = 18

LABEL_NAMES = ("car", "building", "rubble")


@dataclass(frozen=True)
class PatchSample:
    image_id: str
    time_tag: str
    patch: PatchSpec
    label: int
    variant_id: int = 0
    hflip: bool = False

    @property
    def sample_id(self) -> str:
        return (f"{self.image_id}:{self.patch.cx},{self.patch.cy},"
                f"{self.patch.size}#{self.variant_id}")


def division_offsets(size: int):
    """Centers of the 9 divisions relative to the patch center, original first."""
    q = size // 4
    offsets = [(0, 0)]
    for dy in (-q, 0, q):
        for dx in (-q, 0, q):
            if (dx, dy) != (0, 0):
                offsets.append((dx, dy))
    return offsets


def augment(sample: PatchSample) -> list:
    """Expand one sample into its 18 deterministic variants."""
    if sample.patch.size < 2:
        raise ValidationError(f"cannot augment degenerate patch of size {sample.patch.size}")
    variants = []
    for div, (dx, dy) in enumerate(division_offsets(sample.patch.size)):
        patch = PatchSpec(sample.patch.cx + dx, sample.patch.cy + dy, sample.patch.size)
        for flip in (False, True):
            variants.append(
                replace(sample, patch=patch, variant_id=div * 2 + int(flip), hflip=flip)
            )
    assert len(variants) == N_VARIANTS
    return variants
