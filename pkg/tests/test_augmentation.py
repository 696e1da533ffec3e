import numpy as np
import pytest

from hypermaps.augmentation import (N_VARIANTS, PatchSample, augment,
                                    division_offsets)
from hypermaps.descriptors import GaussianParams, PatchSpec, hypermap_descriptor
from hypermaps.errors import ValidationError
from hypermaps.featuremaps import hflip_stack
from hypermaps.synthetic import synthesize_stack


def make_sample(cx=40, cy=40, size=30, label=1):
    return PatchSample(image_id="img", time_tag="t0",
                       patch=PatchSpec(cx, cy, size), label=label)


def test_exactly_18_variants_same_label():
    variants = augment(make_sample(label=2))
    assert len(variants) == N_VARIANTS == 18
    assert all(v.label == 2 for v in variants)
    assert all(v.time_tag == "t0" for v in variants)
    assert [v.variant_id for v in variants] == list(range(18))


def test_variant_zero_is_identity():
    sample = make_sample()
    variants = augment(sample)
    v0 = variants[0]
    assert v0.patch == sample.patch
    assert not v0.hflip
    assert v0.variant_id == 0


def test_division_geometry():
    offsets = division_offsets(30)
    assert offsets[0] == (0, 0)
    assert len(offsets) == 9
    q = 30 // 4
    assert set(offsets) == {(dx, dy) for dx in (-q, 0, q) for dy in (-q, 0, q)}


def test_deterministic():
    a = augment(make_sample())
    b = augment(make_sample())
    assert a == b


def test_degenerate_patch_rejected():
    with pytest.raises(ValidationError, match="degenerate"):
        augment(make_sample(size=1))


def test_double_flip_is_identity():
    # flipping the maps twice restores the pixel region a flipped variant reads
    stack = synthesize_stack(1, 0, (80, 80))
    twice = hflip_stack(hflip_stack(stack))
    for v in [v for v in augment(make_sample(size=31)) if v.hflip][:3]:
        once = hypermap_descriptor(stack, v.patch, GaussianParams(300.0), hflip=True)
        again = hypermap_descriptor(twice, v.patch, GaussianParams(300.0), hflip=True)
        np.testing.assert_array_equal(once.values, again.values)


def test_flip_commutes_with_extraction_on_flipped_maps():
    stack = synthesize_stack(6, 2, (64, 64))
    flipped_stack = hflip_stack(stack)
    w = stack.image_size[1]
    for cx, cy, size in ((20, 30, 15), (5, 60, 9), (50, 10, 31), (40, 8, 30),
                         (0, 0, 10), (63, 63, 50)):
        direct = hypermap_descriptor(stack, PatchSpec(cx, cy, size),
                                     GaussianParams(300.0), hflip=True)
        via_maps = hypermap_descriptor(flipped_stack,
                                       PatchSpec(w - 1 - cx, cy, size),
                                       GaussianParams(300.0))
        np.testing.assert_allclose(direct.values, via_maps.values,
                                   rtol=1e-12, atol=1e-12)
        unweighted = hypermap_descriptor(stack, PatchSpec(cx, cy, size),
                                         weighted=False, hflip=True)
        unweighted_via = hypermap_descriptor(flipped_stack,
                                             PatchSpec(w - 1 - cx, cy, size),
                                             weighted=False)
        np.testing.assert_allclose(unweighted.values, unweighted_via.values,
                                   rtol=1e-12, atol=1e-12)


def test_flip_variant_of_symmetric_odd_patch_is_identical():
    # Gaussian/uniform weights are reflection-symmetric about the patch
    # center and clamping mirrors with the patch, so for odd sizes the
    # accumulation cannot distinguish a patch from its mirrored content.
    # (Even sizes shift by one pixel under the flipped frame's floor
    # centering; flips carry genuinely new information only through
    # per-patch fc7 vectors or a backbone.)
    stack = synthesize_stack(2, 1, (80, 80))
    for patch in (PatchSpec(40, 40, 31), PatchSpec(3, 40, 31)):
        a = hypermap_descriptor(stack, patch, GaussianParams(300.0))
        b = hypermap_descriptor(stack, patch, GaussianParams(300.0), hflip=True)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12)


def test_flip_variant_uses_flipped_fc7_when_per_patch():
    stack = synthesize_stack(2, 1, (80, 80))
    stack.fc7_granularity = "per_patch"
    plain = np.full(4096, 0.25, dtype=np.float32)
    flipped = np.full(4096, 0.75, dtype=np.float32)
    stack.fc7_patches[(40, 40, 31, False)] = plain
    stack.fc7_patches[(40, 40, 31, True)] = flipped
    a = hypermap_descriptor(stack, PatchSpec(40, 40, 31), GaussianParams(300.0))
    b = hypermap_descriptor(stack, PatchSpec(40, 40, 31), GaussianParams(300.0),
                            hflip=True)
    np.testing.assert_array_equal(a.segment("fc7"), plain)
    np.testing.assert_array_equal(b.segment("fc7"), flipped)
    np.testing.assert_allclose(a.segment("pool2"), b.segment("pool2"), rtol=1e-12)


def test_sample_ids_distinct_per_variant():
    ids = {v.sample_id for v in augment(make_sample())}
    assert len(ids) == 18
