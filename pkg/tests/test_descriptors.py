import numpy as np
import pytest

from hypermaps.descriptors import (DEFAULT_LAYOUT, Descriptor, GaussianParams,
                                   LayoutSegment, PatchSpec, WeightGrid,
                                   accumulate_channel, accumulate_channel_naive,
                                   gaussian_weights, hypercolumn_descriptor,
                                   hypermap_descriptor, layout_dim,
                                   uniform_weights)
from hypermaps.errors import ValidationError
from hypermaps.featuremaps import FeatureMap, FeatureStack, Region
from hypermaps.synthetic import synthesize_stack


def brute_force_gaussian(patch, sigma2, image_size, normalized):
    h_img, w_img = image_size
    y0 = patch.cy - patch.size // 2
    x0 = patch.cx - patch.size // 2
    mu_x = x0 + (patch.size - 1) / 2.0
    mu_y = y0 + (patch.size - 1) / 2.0
    rows = []
    for y in range(max(0, y0), min(h_img, y0 + patch.size)):
        row = []
        for x in range(max(0, x0), min(w_img, x0 + patch.size)):
            row.append(np.exp(-((x - mu_x) ** 2 + (y - mu_y) ** 2) / (2.0 * sigma2)))
        rows.append(row)
    w = np.array(rows)
    return w / w.sum() if normalized else w


def test_single_pixel_patch_normalized_weight_is_one():
    grid = gaussian_weights(PatchSpec(4, 4, 1), GaussianParams(300.0), (9, 9))
    assert grid.weights.shape == (1, 1)
    assert grid.weights[0, 0] == 1.0


def test_3x3_symmetry():
    grid = gaussian_weights(PatchSpec(5, 5, 3), GaussianParams(300.0), (11, 11))
    w = grid.weights
    assert w[1, 1] == w.max()
    edges = [w[0, 1], w[1, 0], w[1, 2], w[2, 1]]
    corners = [w[0, 0], w[0, 2], w[2, 0], w[2, 2]]
    assert np.allclose(edges, edges[0], rtol=1e-12)
    assert np.allclose(corners, corners[0], rtol=1e-12)
    assert corners[0] < edges[0] < w[1, 1]


def test_70x70_grid_matches_brute_force():
    patch = PatchSpec(60, 55, 70)
    grid = gaussian_weights(patch, GaussianParams(300.0), (128, 128))
    expected = brute_force_gaussian(patch, 300.0, (128, 128), normalized=True)
    np.testing.assert_allclose(grid.weights, expected, rtol=1e-12)


def test_literal_mode_matches_raw_formula():
    patch = PatchSpec(10, 10, 5)
    grid = gaussian_weights(patch, GaussianParams(42.0), (32, 32), normalized=False)
    expected = brute_force_gaussian(patch, 42.0, (32, 32), normalized=False)
    np.testing.assert_allclose(grid.weights, expected, rtol=1e-12)
    assert grid.weights.max() <= 1.0


def test_normalization_sums_to_one_all_sizes_and_borders():
    image_size = (100, 100)
    for size in (10, 30, 50, 70, 90):
        for center in ((50, 50), (0, 0), (99, 99), (0, 50), (99, 2), (4, 95)):
            patch = PatchSpec(center[0], center[1], size)
            g = gaussian_weights(patch, GaussianParams(300.0), image_size)
            assert abs(g.total() - 1.0) <= 1e-9
            u = uniform_weights(patch, image_size)
            assert abs(u.total() - 1.0) <= 1e-9


def test_sigma2_must_be_positive():
    with pytest.raises(ValidationError, match="sigma2"):
        GaussianParams(0.0)


def test_empty_clamped_region_rejected():
    with pytest.raises(ValidationError, match="empty"):
        PatchSpec(500, 500, 10).region((32, 32))


def test_mu_override():
    patch = PatchSpec(8, 8, 5)
    grid = gaussian_weights(patch, GaussianParams(10.0, mu=(6.0, 8.0)), (17, 17))
    # maximum sits at the pixel nearest the overridden center
    iy, ix = np.unravel_index(np.argmax(grid.weights), grid.weights.shape)
    assert (grid.region.x0 + ix, grid.region.y0 + iy) == (6, 8)


def test_accumulate_constant_normalized_is_mean():
    fmap = FeatureMap(np.full((2, 16, 16), 3.5))
    grid = uniform_weights(PatchSpec(8, 8, 6), (16, 16))
    assert accumulate_channel(fmap, 0, grid) == pytest.approx(3.5, rel=1e-12)
    g = gaussian_weights(PatchSpec(8, 8, 6), GaussianParams(50.0), (16, 16))
    assert accumulate_channel(fmap, 1, g) == pytest.approx(3.5, rel=1e-12)


def test_accumulate_constant_literal_uniform_is_area_sum():
    fmap = FeatureMap(np.full((1, 20, 20), 2.0))
    grid = uniform_weights(PatchSpec(10, 10, 8), (20, 20), normalized=False)
    assert accumulate_channel(fmap, 0, grid) == pytest.approx(2.0 * 8 * 8, rel=1e-12)


def test_accumulate_random_8x8_matches_naive():
    rng = np.random.default_rng(0)
    fmap = FeatureMap(rng.uniform(0.1, 1.1, (1, 8, 8)))
    w = rng.uniform(0.0, 1.0, (5, 5))
    grid = WeightGrid(Region(1, 2, 5, 5), w)
    fast = accumulate_channel(fmap, 0, grid)
    slow = accumulate_channel_naive(fmap, 0, grid)
    assert abs(fast - slow) <= 1e-5 * abs(slow)


def test_accumulate_region_out_of_bounds():
    fmap = FeatureMap(np.zeros((1, 4, 4)))
    grid = WeightGrid(Region(0, 0, 4, 6), np.ones((4, 6)))
    with pytest.raises(ValidationError, match="out of bounds"):
        accumulate_channel(fmap, 0, grid)


def test_accumulate_linearity():
    rng = np.random.default_rng(1)
    f = rng.uniform(0.1, 1.0, (1, 12, 12))
    g = rng.uniform(0.1, 1.0, (1, 12, 12))
    a, b = 2.5, -0.75
    grid = gaussian_weights(PatchSpec(6, 6, 7), GaussianParams(80.0), (12, 12))
    lhs = accumulate_channel(FeatureMap(a * f + b * g), 0, grid)
    rhs = a * accumulate_channel(FeatureMap(f), 0, grid) + \
        b * accumulate_channel(FeatureMap(g), 0, grid)
    assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs))


def test_descriptor_length_4736_and_segments():
    assert layout_dim(DEFAULT_LAYOUT) == 4736
    stack = synthesize_stack(0, 0, (64, 64))
    d = hypermap_descriptor(stack, PatchSpec(32, 32, 30), GaussianParams(300.0))
    assert len(d) == 4736
    assert d.segment("pool2").shape == (128,)
    assert d.segment("conv4_3").shape == (512,)
    assert d.segment("fc7").shape == (4096,)
    np.testing.assert_array_equal(d.values[:128], d.segment("pool2"))
    np.testing.assert_array_equal(d.values[128:640], d.segment("conv4_3"))
    np.testing.assert_array_equal(d.values[640:], d.segment("fc7"))


def test_all_zero_stack_gives_all_zero_descriptor():
    layers = {
        "pool2": FeatureMap(np.zeros((128, 8, 8), dtype=np.float32)),
        "conv4_3": FeatureMap(np.zeros((512, 4, 4), dtype=np.float32)),
        "fc7": FeatureMap(np.zeros((4096, 1, 1), dtype=np.float32)),
    }
    stack = FeatureStack("zero", (32, 32), layers)
    d = hypermap_descriptor(stack, PatchSpec(16, 16, 10), GaussianParams(300.0))
    assert np.all(d.values == 0.0)
    d2 = hypermap_descriptor(stack, PatchSpec(16, 16, 10), weighted=False)
    assert np.all(d2.values == 0.0)


def test_gaussian_flattens_to_uniform_at_huge_sigma2():
    stack = synthesize_stack(2, 1, (96, 96))
    rng = np.random.default_rng(3)
    for _ in range(25):
        size = int(rng.choice([10, 30, 50, 70, 90]))
        cx, cy = int(rng.integers(0, 96)), int(rng.integers(0, 96))
        patch = PatchSpec(cx, cy, size)
        weighted = hypermap_descriptor(stack, patch, GaussianParams(1e9))
        flat = hypermap_descriptor(stack, patch, weighted=False)
        np.testing.assert_allclose(weighted.values, flat.values, rtol=1e-6)


def test_missing_layer_error():
    stack = FeatureStack("x", (8, 8), {"pool2": FeatureMap(np.zeros((128, 2, 2)))})
    with pytest.raises(ValidationError, match="no layer"):
        hypermap_descriptor(stack, PatchSpec(4, 4, 4), GaussianParams(300.0))


def test_channel_count_mismatch_error():
    layers = {
        "pool2": FeatureMap(np.zeros((64, 2, 2))),
        "conv4_3": FeatureMap(np.zeros((512, 2, 2))),
        "fc7": FeatureMap(np.zeros((4096, 1, 1))),
    }
    stack = FeatureStack("x", (8, 8), layers)
    with pytest.raises(ValidationError, match="channels"):
        hypermap_descriptor(stack, PatchSpec(4, 4, 4), GaussianParams(300.0))


def test_hypercolumn_constant_stack_same_everywhere():
    layers = {
        "pool2": FeatureMap(np.full((128, 3, 3), 1.5, dtype=np.float32)),
        "conv4_3": FeatureMap(np.full((512, 2, 2), -0.5, dtype=np.float32)),
        "fc7": FeatureMap(np.full((4096, 1, 1), 2.0, dtype=np.float32)),
    }
    stack = FeatureStack("const", (24, 24), layers)
    a = hypercolumn_descriptor(stack, (0, 0))
    b = hypercolumn_descriptor(stack, (13, 7))
    np.testing.assert_array_equal(a.values, b.values)
    assert len(a) == 4736


def test_hypercolumn_equals_1x1_hypermap():
    stack = synthesize_stack(4, 2, (48, 48))
    for pixel in ((10, 12), (0, 0), (47, 23)):
        col = hypercolumn_descriptor(stack, pixel)
        hm = hypermap_descriptor(stack, PatchSpec(pixel[0], pixel[1], 1),
                                 GaussianParams(300.0))
        np.testing.assert_array_equal(col.values, hm.values)


def test_hypercolumn_out_of_bounds():
    stack = synthesize_stack(4, 0, (32, 32))
    with pytest.raises(ValidationError, match="outside"):
        hypercolumn_descriptor(stack, (32, 0))


def test_scale_comparability_constant_map():
    layers = {
        "pool2": FeatureMap(np.full((128, 8, 8), 0.7, dtype=np.float32)),
        "conv4_3": FeatureMap(np.full((512, 4, 4), 1.3, dtype=np.float32)),
        "fc7": FeatureMap(np.full((4096, 1, 1), 0.2, dtype=np.float32)),
    }
    stack = FeatureStack("const", (64, 64), layers)
    reference = None
    for size in (10, 30, 50, 70):
        d = hypermap_descriptor(stack, PatchSpec(32, 32, size), GaussianParams(300.0))
        if reference is None:
            reference = d.values
        np.testing.assert_allclose(d.values, reference, rtol=1e-9)


def test_monotone_center_emphasis():
    base = np.full((1, 15, 15), 1.0)
    bumped = base.copy()
    bumped[0, 7, 7] += 0.5  # +delta at the patch center pixel
    patch = PatchSpec(7, 7, 9)
    image_size = (15, 15)
    for sigma2 in (10.0, 100.0, 300.0, 5000.0):
        g = gaussian_weights(patch, GaussianParams(sigma2), image_size)
        u = uniform_weights(patch, image_size)
        dw = accumulate_channel(FeatureMap(bumped), 0, g) - \
            accumulate_channel(FeatureMap(base), 0, g)
        du = accumulate_channel(FeatureMap(bumped), 0, u) - \
            accumulate_channel(FeatureMap(base), 0, u)
        assert dw > du > 0


def test_accumulation_oracle_1000_random_cases():
    rng = np.random.default_rng(12345)
    for _ in range(1000):
        h = int(rng.integers(4, 24))
        w = int(rng.integers(4, 24))
        fmap = FeatureMap(rng.uniform(0.05, 1.05, (2, h, w)))
        k = int(rng.integers(0, 2))
        size = int(rng.integers(1, min(h, w) + 3))
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
        patch = PatchSpec(cx, cy, size)
        kind = rng.integers(0, 4)
        if kind == 0:
            grid = uniform_weights(patch, (h, w), normalized=False)
        elif kind == 1:
            grid = uniform_weights(patch, (h, w), normalized=True)
        elif kind == 2:
            grid = gaussian_weights(patch, GaussianParams(float(rng.uniform(5, 500))),
                                    (h, w), normalized=bool(rng.integers(0, 2)))
        else:
            region = patch.region((h, w))
            grid = WeightGrid(region, rng.uniform(0.01, 1.0, (region.h, region.w)))
        fast = accumulate_channel(fmap, k, grid)
        slow = accumulate_channel_naive(fmap, k, grid)
        assert abs(fast - slow) <= 1e-5 * abs(slow)


def test_descriptor_layout_mismatch():
    with pytest.raises(ValidationError, match="length"):
        Descriptor(np.zeros(10), DEFAULT_LAYOUT)


def test_custom_layout():
    layout = (LayoutSegment("pool2", 128, True), LayoutSegment("fc7", 4096, False))
    stack = synthesize_stack(7, 0, (40, 40))
    d = hypermap_descriptor(stack, PatchSpec(20, 20, 10), GaussianParams(300.0),
                            layout=layout)
    assert len(d) == 128 + 4096
