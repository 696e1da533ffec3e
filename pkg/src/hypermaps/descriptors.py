"""Hypercolumn and hypermap descriptors.

A hypercolumn is the per-pixel concatenation of all layer activations at
one image location. A hypermap replaces the map layers' per-pixel values
with one accumulated value per channel over a square patch:

    unweighted:  f'_k = sum_i f_ik          over the patch pixels
    weighted:    f'_k = sum_i alpha_i f_ik  with alpha_i a 2-D isotropic
                 Gaussian in pixel coordinates centered on the patch,
                 alpha_i = exp(-((x_i-mu_x)^2 + (y_i-mu_y)^2) / (2 sigma2))

The fc7 segment is appended as-is (it is spatially constant per image,
or looked up per patch when the stack was exported that way). With the
default pool2 + conv4_3 + fc7 layout a descriptor has
128 + 512 + 4096 = 4736 dimensions.

Weights are normalized to sum 1 by default so that descriptor magnitude
is comparable across patch sizes (a raw sum scales with patch area,
which would break sharing one classifier over several scales). The raw
literal sums remain available with normalized=False.

Patches at the image border are clamped to the image and the weights
renormalized over the surviving pixels; the Gaussian center stays at the
unclamped patch center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .featuremaps import FeatureMap, FeatureStack, Region, upsampled_region


@dataclass(frozen=True)
class PatchSpec:
    """Square patch: center (cx, cy) in image pixel coordinates, side `size`."""

    cx: int
    cy: int
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValidationError(f"patch size must be >= 1, got {self.size}")

    def bounds(self):
        """Unclamped (y0, x0) of the patch rectangle."""
        return self.cy - self.size // 2, self.cx - self.size // 2

    def center_point(self):
        """Continuous center of the patch rectangle, (mu_x, mu_y)."""
        y0, x0 = self.bounds()
        half = (self.size - 1) / 2.0
        return x0 + half, y0 + half

    def region(self, image_size) -> Region:
        """Intersection with the image; raises if empty."""
        h_img, w_img = image_size
        y0, x0 = self.bounds()
        ry0, rx0 = max(0, y0), max(0, x0)
        ry1 = min(h_img, y0 + self.size)
        rx1 = min(w_img, x0 + self.size)
        if ry1 <= ry0 or rx1 <= rx0:
            raise ValidationError(
                f"patch {self} has empty intersection with image {image_size}"
            )
        return Region(ry0, rx0, ry1 - ry0, rx1 - rx0)


@dataclass(frozen=True)
class GaussianParams:
    """Variance in px^2 and optional explicit center; default center is the
    patch rectangle's own midpoint."""

    sigma2: float
    mu: tuple | None = None  # (mu_x, mu_y)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be > 0, got {self.sigma2}")


class WeightGrid:
    """Per-pixel weights over a clamped patch region.

    Gaussian and uniform grids are separable (an outer product of a row
    factor and a column factor); the factors are kept so accumulation can
    run as two small matrix products instead of a full 2-D reduction.
    Arbitrary weight grids (factors=None) use the general path.
    """

    def __init__(self, region: Region, weights: np.ndarray, uniform: bool = False,
                 factors=None):
        self.region = region
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (region.h, region.w):
            raise ValidationError(
                f"weights shape {self.weights.shape} != region {region.h}x{region.w}"
            )
        self.uniform = uniform
        self.factors = factors  # (wy, wx) with weights == outer(wy, wx)

    def mirrored_x(self, image_width: int) -> "WeightGrid":
        """The same grid reflected about the image's vertical midline:
        the region moves to the mirrored columns and the weights reverse."""
        r = self.region
        factors = None
        if self.factors is not None:
            wy, wx = self.factors
            factors = (wy, wx[::-1].copy())
        return WeightGrid(Region(r.y0, image_width - r.x1, r.h, r.w),
                          self.weights[:, ::-1].copy(),
                          uniform=self.uniform, factors=factors)

    def total(self) -> float:
        return float(self.weights.sum())


def _separable_grid(region: Region, wy: np.ndarray, wx: np.ndarray,
                    uniform: bool) -> WeightGrid:
    return WeightGrid(region, wy[:, None] * wx[None, :], uniform=uniform,
                      factors=(wy, wx))


def gaussian_weights(patch: PatchSpec, params: GaussianParams, image_size,
                     normalized: bool = True) -> WeightGrid:
    region = patch.region(image_size)
    mu = params.mu if params.mu is not None else patch.center_point()
    xs = np.arange(region.x0, region.x1, dtype=np.float64) - mu[0]
    ys = np.arange(region.y0, region.y1, dtype=np.float64) - mu[1]
    wy = np.exp(-(ys ** 2) / (2.0 * params.sigma2))
    wx = np.exp(-(xs ** 2) / (2.0 * params.sigma2))
    if normalized:
        # sum(outer(wy, wx)) == sum(wy) * sum(wx), so normalizing the
        # factors normalizes the grid
        wy = wy / wy.sum()
        wx = wx / wx.sum()
    return _separable_grid(region, wy, wx, uniform=False)


def uniform_weights(patch: PatchSpec, image_size, normalized: bool = True) -> WeightGrid:
    region = patch.region(image_size)
    wy = np.full(region.h, 1.0 / region.h if normalized else 1.0)
    wx = np.full(region.w, 1.0 / region.w if normalized else 1.0)
    return _separable_grid(region, wy, wx, uniform=True)


def accumulate_channel(fmap: FeatureMap, k: int, grid: WeightGrid) -> float:
    """Weighted accumulation of channel k over the grid's region.

    The map must already be at image resolution. Uniform grids go through
    the map's cached summed-area table; anything else is a direct
    weighted dot product over the region slice.
    """
    r = grid.region
    if r.y1 > fmap.height or r.x1 > fmap.width or r.y0 < 0 or r.x0 < 0:
        raise ValidationError(f"region {r} out of bounds for map {fmap.shape}")
    if grid.uniform:
        return float(fmap.region_sum(r)[k] * grid.weights[0, 0])
    window = fmap.values[k, r.y0:r.y1, r.x0:r.x1].astype(np.float64, copy=False)
    if grid.factors is not None:
        wy, wx = grid.factors
        return float(wy @ window @ wx)
    return float(np.sum(window * grid.weights))


def accumulate_channel_naive(fmap: FeatureMap, k: int, grid: WeightGrid) -> float:
    """Double-loop reference for accumulate_channel; kept as the oracle."""
    r = grid.region
    total = 0.0
    for j in range(r.h):
        for i in range(r.w):
            total += grid.weights[j, i] * float(fmap.values[k, r.y0 + j, r.x0 + i])
    return total


@dataclass(frozen=True)
class LayoutSegment:
    name: str
    channels: int
    accumulate: bool  # False for flat vector layers (fc7)


DEFAULT_LAYOUT = (
    LayoutSegment("pool2", 128, True),
    LayoutSegment("conv4_3", 512, True),
    LayoutSegment("fc7", 4096, False),
)


def layout_dim(layout=DEFAULT_LAYOUT) -> int:
    return sum(seg.channels for seg in layout)


@dataclass
class Descriptor:
    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (layout_dim(self.layout),):
            raise ValidationError(
                f"descriptor length {self.values.shape} != layout dim {layout_dim(self.layout)}"
            )

    def __len__(self):
        return self.values.shape[0]

    def segment(self, name: str) -> np.ndarray:
        off = 0
        for seg in self.layout:
            if seg.name == name:
                return self.values[off:off + seg.channels]
            off += seg.channels
        raise ValidationError(f"no segment {name!r} in layout")


def _check_layer(stack: FeatureStack, seg: LayoutSegment) -> FeatureMap:
    fmap = stack.layer(seg.name)
    if fmap.channels != seg.channels:
        raise ValidationError(
            f"layer {seg.name} has {fmap.channels} channels, layout wants {seg.channels}"
        )
    return fmap


def _weight_grid(patch, params, weighted, normalized, image_size):
    if weighted:
        if params is None:
            raise ValidationError("weighted descriptor requires GaussianParams")
        return gaussian_weights(patch, params, image_size, normalized=normalized)
    return uniform_weights(patch, image_size, normalized=normalized)


# Images up to this many pixels keep their fully upsampled layers cached on
# the stack; larger images (panoramas) fall back to lazy per-patch
# interpolation. Both paths compute identical values element for element.
UPSAMPLE_CACHE_MAX_PIXELS = 512 * 512


def _region_values(stack: FeatureStack, name: str, region) -> np.ndarray:
    h, w = stack.image_size
    if h * w <= UPSAMPLE_CACHE_MAX_PIXELS:
        up = stack.upsampled(name)
        return up.values[:, region.y0:region.y1, region.x0:region.x1]
    return upsampled_region(stack.layer(name), stack.image_size, region)


def hypermap_descriptor(stack: FeatureStack, patch: PatchSpec,
                        params: GaussianParams | None = None,
                        weighted: bool = True, normalized: bool = True,
                        layout=DEFAULT_LAYOUT, hflip: bool = False) -> Descriptor:
    """One accumulated value per map channel plus the fc7 vector.

    hflip extracts the patch as the horizontally flipped image would see
    it (used by augmentation): the weight grid is built at the mirrored
    center, clamped against the mirrored border, then reflected back onto
    the original maps. This is exactly extraction at the mirrored center
    from a flipped stack, without flipping any maps.
    """
    if hflip:
        w_img = stack.image_size[1]
        mirrored = PatchSpec(w_img - 1 - patch.cx, patch.cy, patch.size)
        grid = _weight_grid(mirrored, params, weighted, normalized,
                            stack.image_size).mirrored_x(w_img)
    else:
        grid = _weight_grid(patch, params, weighted, normalized, stack.image_size)
    parts = []
    for seg in layout:
        _check_layer(stack, seg)
        if not seg.accumulate:
            parts.append(stack.fc7_vector(center=(patch.cx, patch.cy),
                                          size=patch.size, hflip=hflip))
            continue
        if grid.uniform:
            up = stack.upsampled(seg.name)
            sums = up.region_sum(grid.region)
            parts.append(sums * grid.weights[0, 0])
        else:
            window = _region_values(stack, seg.name, grid.region)
            if grid.factors is not None:
                wy, wx = grid.factors
                parts.append((window @ wx) @ wy)
            else:
                parts.append(np.einsum("chw,hw->c", window, grid.weights))
    return Descriptor(np.concatenate(parts), layout)


def hypercolumn_descriptor(stack: FeatureStack, pixel,
                           layout=DEFAULT_LAYOUT) -> Descriptor:
    """Per-pixel concatenation of all layers at image resolution."""
    x, y = int(pixel[0]), int(pixel[1])
    h_img, w_img = stack.image_size
    if not (0 <= x < w_img and 0 <= y < h_img):
        raise ValidationError(f"pixel ({x}, {y}) outside image {stack.image_size}")
    point = Region(y, x, 1, 1)
    parts = []
    for seg in layout:
        fmap = _check_layer(stack, seg)
        if not seg.accumulate:
            parts.append(stack.fc7_vector(center=(x, y), size=1))
            continue
        parts.append(upsampled_region(fmap, stack.image_size, point)[:, 0, 0])
    return Descriptor(np.concatenate(parts), layout)
