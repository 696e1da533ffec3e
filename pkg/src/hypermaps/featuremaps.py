"""Feature stacks and bilinear upsampling to input-image resolution.

A FeatureStack bundles the per-layer activation maps of one image
(pool2: 128 channels at roughly 1/4 resolution, conv4_3: 512 at 1/8,
fc7: a 4096-vector stored as a 4096x1x1 map when computed per image).
Maps are upsampled to image resolution with corner-aligned bilinear
interpolation: output corner pixels equal input corner pixels, and
upsampling to the source size is the identity.

Full-image upsampling of 512 channels to panorama size is wasted work
when only small patches are read, so the production path interpolates
just the rows/columns a patch touches (`upsampled_region`). The naive
per-pixel implementation is kept as the reference the fast paths are
tested against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor_store
from .errors import DataError, ValidationError

DEFAULT_CHANNELS = {"pool2": 128, "conv4_3": 512, "fc7": 4096}


@dataclass(frozen=True)
class Region:
    """A clamped pixel rectangle: rows [y0, y0+h), columns [x0, x0+w)."""

    y0: int
    x0: int
    h: int
    w: int

    @property
    def y1(self):
        return self.y0 + self.h

    @property
    def x1(self):
        return self.x0 + self.w

    @property
    def area(self):
        return self.h * self.w


class FeatureMap:
    """One layer's activations as a C x H x W array of finite floats."""

    def __init__(self, values):
        values = np.asarray(values)
        if values.ndim != 3:
            raise ValidationError(f"feature map must be C x H x W, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1 or values.shape[2] < 1:
            raise ValidationError(f"feature map dims must be >= 1, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("feature map contains non-finite values")
        self.values = values
        self._sat = None  # summed-area table, built on first uniform accumulation

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape

    def sat(self) -> np.ndarray:
        """Per-channel summed-area table with a zero border, float64.

        Rectangle sums become four lookups: sum over rows [y0,y1) and
        columns [x0,x1) of channel k is
        sat[k,y1,x1] - sat[k,y0,x1] - sat[k,y1,x0] + sat[k,y0,x0].
        """
        if self._sat is None:
            c, h, w = self.values.shape
            table = np.zeros((c, h + 1, w + 1), dtype=np.float64)
            table[:, 1:, 1:] = np.cumsum(
                np.cumsum(self.values.astype(np.float64), axis=1), axis=2
            )
            self._sat = table
        return self._sat

    def region_sum(self, region: Region) -> np.ndarray:
        """Per-channel sum over a rectangle, via the cached summed-area table."""
        s = self.sat()
        return (
            s[:, region.y1, region.x1]
            - s[:, region.y0, region.x1]
            - s[:, region.y1, region.x0]
            + s[:, region.y0, region.x0]
        )


def _source_coords(n_src: int, n_dst: int, idx: np.ndarray) -> np.ndarray:
    # corner-aligned: destination 0 -> source 0, destination n_dst-1 -> source n_src-1
    if n_dst == 1:
        return np.zeros_like(np.asarray(idx, dtype=np.float64))
    return np.asarray(idx, dtype=np.float64) * (n_src - 1) / (n_dst - 1)


def _axis_weights(n_src, n_dst, idx):
    src = _source_coords(n_src, n_dst, idx)
    lo = np.floor(src).astype(np.intp)
    lo = np.clip(lo, 0, n_src - 1)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = src - lo
    return lo, hi, frac


def upsample_bilinear(fmap: FeatureMap, target) -> FeatureMap:
    """Upsample all channels to (H_t, W_t); vectorized production path."""
    h_t, w_t = int(target[0]), int(target[1])
    c, h, w = fmap.shape
    if h_t < h or w_t < w:
        raise ValidationError(f"cannot downscale {h}x{w} to {h_t}x{w_t}")
    v = fmap.values.astype(np.float64, copy=False)
    y_lo, y_hi, fy = _axis_weights(h, h_t, np.arange(h_t))
    x_lo, x_hi, fx = _axis_weights(w, w_t, np.arange(w_t))
    rows = v[:, y_lo, :] * (1.0 - fy)[None, :, None] + v[:, y_hi, :] * fy[None, :, None]
    out = rows[:, :, x_lo] * (1.0 - fx)[None, None, :] + rows[:, :, x_hi] * fx[None, None, :]
    return FeatureMap(out)


def upsample_bilinear_naive(fmap: FeatureMap, target) -> FeatureMap:
    """Per-pixel reference implementation; oracle for the fast paths."""
    h_t, w_t = int(target[0]), int(target[1])
    c, h, w = fmap.shape
    if h_t < h or w_t < w:
        raise ValidationError(f"cannot downscale {h}x{w} to {h_t}x{w_t}")
    v = fmap.values
    out = np.empty((c, h_t, w_t), dtype=np.float64)
    for j in range(h_t):
        sy = 0.0 if h_t == 1 else j * (h - 1) / (h_t - 1)
        y0 = min(int(np.floor(sy)), h - 1)
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for i in range(w_t):
            sx = 0.0 if w_t == 1 else i * (w - 1) / (w_t - 1)
            x0 = min(int(np.floor(sx)), w - 1)
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            for k in range(c):
                top = v[k, y0, x0] * (1 - fx) + v[k, y0, x1] * fx
                bot = v[k, y1, x0] * (1 - fx) + v[k, y1, x1] * fx
                out[k, j, i] = top * (1 - fy) + bot * fy
    return FeatureMap(out)


def upsampled_region(fmap: FeatureMap, image_size, region: Region) -> np.ndarray:
    """Values of `region` in the map upsampled to image_size, without
    materializing the full upsampled map. Returns C x h x w float64."""
    h_img, w_img = int(image_size[0]), int(image_size[1])
    c, h, w = fmap.shape
    if h_img < h or w_img < w:
        raise ValidationError(f"cannot downscale {h}x{w} to {h_img}x{w_img}")
    if region.y0 < 0 or region.x0 < 0 or region.y1 > h_img or region.x1 > w_img:
        raise ValidationError(f"region {region} out of bounds for image {image_size}")
    v = fmap.values.astype(np.float64, copy=False)
    y_lo, y_hi, fy = _axis_weights(h, h_img, np.arange(region.y0, region.y1))
    x_lo, x_hi, fx = _axis_weights(w, w_img, np.arange(region.x0, region.x1))
    rows = v[:, y_lo, :] * (1.0 - fy)[None, :, None] + v[:, y_hi, :] * fy[None, :, None]
    return rows[:, :, x_lo] * (1.0 - fx)[None, None, :] + rows[:, :, x_hi] * fx[None, None, :]


def hflip_map(fmap: FeatureMap) -> FeatureMap:
    return FeatureMap(fmap.values[:, :, ::-1].copy())


@dataclass
class FeatureStack:
    """All layers of one image plus bookkeeping for descriptor extraction."""

    image_id: str
    image_size: tuple  # (H, W)
    layers: dict  # layer name -> FeatureMap
    fc7_granularity: str = "per_image"
    fc7_patches: dict = field(default_factory=dict)  # (cx, cy, size, hflip) -> 1-D array

    def __post_init__(self):
        h, w = self.image_size
        for name, fmap in self.layers.items():
            if fmap.height > h or fmap.width > w:
                raise ValidationError(
                    f"layer {name} is {fmap.height}x{fmap.width}, larger than image {h}x{w}"
                )
        self._upsampled = {}

    def layer(self, name: str) -> FeatureMap:
        if name not in self.layers:
            raise ValidationError(f"stack {self.image_id} has no layer {name!r}")
        return self.layers[name]

    def upsampled(self, name: str) -> FeatureMap:
        """Full upsampled layer, cached; used by the uniform-weight fast path."""
        if name not in self._upsampled:
            self._upsampled[name] = upsample_bilinear(self.layer(name), self.image_size)
        return self._upsampled[name]

    def fc7_vector(self, center=None, size=None, hflip=False) -> np.ndarray:
        fmap = self.layer("fc7")
        if self.fc7_granularity == "per_image":
            return fmap.values.reshape(fmap.channels).astype(np.float64)
        key = (int(center[0]), int(center[1]), int(size), bool(hflip))
        if key not in self.fc7_patches:
            raise DataError(
                f"stack {self.image_id}: no per-patch fc7 vector for {key}"
            )
        return np.asarray(self.fc7_patches[key], dtype=np.float64)


def hflip_stack(stack: FeatureStack) -> FeatureStack:
    """Mirror all spatial maps left-right (fc7 vectors are location-free)."""
    return FeatureStack(
        image_id=stack.image_id + "~hflip",
        image_size=stack.image_size,
        layers={name: hflip_map(m) if m.width > 1 else m for name, m in stack.layers.items()},
        fc7_granularity=stack.fc7_granularity,
        fc7_patches=dict(stack.fc7_patches),
    )


def load_stack(entry: tensor_store.ManifestEntry, manifest: tensor_store.DatasetManifest,
               layers=("pool2", "conv4_3", "fc7")) -> FeatureStack:
    """Read a manifest entry's tensor files into a FeatureStack."""
    maps = {}
    fc7_patches = {}
    for name in layers:
        rel = entry.layer_files.get(name)
        if rel is None:
            raise DataError(f"entry {entry.image_id}: no file for layer {name}")
        path = manifest.resolve(rel)
        dims, values = tensor_store.read_tensor(path)
        if name == "fc7" and entry.fc7_granularity == "per_patch":
            arr = values.reshape(dims)  # (P, 4096, 1)
            keys_path = path + ".keys.json"
            try:
                with open(keys_path, "r", encoding="utf-8") as fh:
                    keys = json.load(fh)
            except FileNotFoundError as exc:
                raise DataError(f"per-patch fc7 sidecar missing: {keys_path}") from exc
            for key, row in zip(keys, arr[:, :, 0]):
                cx, cy, size, flip = key
                fc7_patches[(int(cx), int(cy), int(size), bool(flip))] = row.astype(np.float64)
            maps[name] = FeatureMap(np.zeros((dims[1], 1, 1), dtype=np.float32))
            continue
        if len(dims) == 1:
            values = values.reshape(dims[0], 1, 1)
        else:
            values = values.reshape(dims)
        maps[name] = FeatureMap(values)
    return FeatureStack(
        image_id=entry.image_id,
        image_size=tuple(entry.image_size),
        layers=maps,
        fc7_granularity=entry.fc7_granularity,
        fc7_patches=fc7_patches,
    )
