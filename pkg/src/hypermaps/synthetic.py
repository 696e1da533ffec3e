"""Backbone-free synthetic feature stacks and datasets.

Each class gets a fixed random per-channel signature; a labeled square
region adds its class signature to the background pattern, optionally
shaped by a Gaussian bump so the signal concentrates at the region
center (this is what makes center-weighted accumulation measurably
better than uniform accumulation on synthetic data). Per-image Gaussian
noise sits on top. Everything is seeded: the same (seed, class, spec)
always produces bit-identical stacks, and a generated dataset is fully
reproducible from its seed.

Generated datasets are written as tensor files, mask PNGs and a manifest,
i.e. exactly what the real exporter would produce, so the whole pipeline
can run without a CNN.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import masks, tensor_store
from .errors import ValidationError
from .featuremaps import FeatureMap, FeatureStack

MAP_LAYERS = (("pool2", 128, 4), ("conv4_3", 512, 8))  # (name, channels, stride)
FC7_CHANNELS = 4096


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 3
    pattern_seed: int = 7
    background_lo: float = 0.5
    background_hi: float = 1.5
    class_gain: float = 0.6
    noise: float = 0.12
    fc7_noise: float = 0.0  # per-image fc7 jitter in generated datasets
    center_concentration: bool = True
    bump_base: float = 0.5  # signal floor inside a region
    bump_boost: float = 0.9  # extra signal at the region center
    bump_width_frac: float = 0.6  # bump sigma as a fraction of half the region size
    size_gain_exp: float = 0.0  # >0 makes larger regions proportionally quieter
    size_gain_ref: float = 30.0
    # confuser ring: an unlabeled band around each core painted with another
    # class's signature; small patches at core borders see mostly ring while
    # larger patches average through to the core. The optional shell outside
    # the ring repeats the core's own class, so mid-size patches that stop at
    # the ring are fooled while larger ones integrate the shell and recover.
    ring_width: int = 0
    ring_gain: float = 1.0
    shell_width: int = 0
    shell_gain: float = 1.0
    fc7_class_signal: bool = True  # only honored by single-class stacks


def class_signatures(spec: SyntheticSpec):
    """Fixed background and per-class channel signatures for every layer."""
    rng = np.random.default_rng(spec.pattern_seed)
    sig = {}
    for name, channels, _stride in MAP_LAYERS + (("fc7", FC7_CHANNELS, 0),):
        background = rng.uniform(spec.background_lo, spec.background_hi, channels)
        class_vecs = rng.uniform(-spec.class_gain, spec.class_gain,
                                 (spec.n_classes, channels))
        sig[name] = (background, class_vecs)
    return sig


def _native_size(image_size, stride):
    h, w = image_size
    return -(-h // stride), -(-w // stride)  # ceil division


def _native_coords(n_native, n_image):
    # image-pixel position of each native cell under corner-aligned upsampling
    if n_native == 1:
        return np.array([(n_image - 1) / 2.0])
    return np.arange(n_native) * (n_image - 1) / (n_native - 1)


def _box(ys, xs, center, size):
    cy, cx = center
    return ((np.abs(ys - cy) <= size / 2.0)[:, None]
            & (np.abs(xs - cx) <= size / 2.0)[None, :])


def _region_gain(spec: SyntheticSpec, ys, xs, center, size):
    """Signal multiplier of one labeled region at positions ys x xs (image px)."""
    box = _box(ys, xs, center, size)
    # larger regions can be made quieter per pixel, so bigger patches must
    # average more area to reach the same signal-to-noise
    loud = (spec.size_gain_ref / size) ** spec.size_gain_exp
    if not spec.center_concentration:
        return box * loud
    cy, cx = center
    sigma = spec.bump_width_frac * size / 2.0
    gy = np.exp(-((ys - cy) ** 2) / (2.0 * sigma * sigma))
    gx = np.exp(-((xs - cx) ** 2) / (2.0 * sigma * sigma))
    return box * (loud * (spec.bump_base + spec.bump_boost * gy[:, None] * gx[None, :]))


@dataclass(frozen=True)
class SynthRegion:
    class_id: int
    center: tuple  # (cy, cx), image px
    core_size: int
    ring_class: int = 0
    y0: int = 0
    x0: int = 0


def _map_pattern(spec, signatures, name, stride, image_size, regions):
    """Noiseless layer values: background + sum of region class signatures."""
    background, class_vecs = signatures[name]
    h_n, w_n = _native_size(image_size, stride)
    ys = _native_coords(h_n, image_size[0])
    xs = _native_coords(w_n, image_size[1])
    values = np.broadcast_to(background[:, None, None], (background.size, h_n, w_n)).copy()
    for r in regions:
        gain = _region_gain(spec, ys, xs, r.center, r.core_size)
        values += class_vecs[r.class_id][:, None, None] * gain[None, :, :]
        if spec.ring_width > 0:
            ring_outer = r.core_size + 2 * spec.ring_width
            ring = (_box(ys, xs, r.center, ring_outer)
                    & ~_box(ys, xs, r.center, r.core_size))
            values += class_vecs[r.ring_class][:, None, None] * \
                (spec.ring_gain * ring)[None, :, :]
            if spec.shell_width > 0:
                shell = (_box(ys, xs, r.center, ring_outer + 2 * spec.shell_width)
                         & ~_box(ys, xs, r.center, ring_outer))
                values += class_vecs[r.class_id][:, None, None] * \
                    (spec.shell_gain * shell)[None, :, :]
    return values


def stack_pattern(spec: SyntheticSpec, class_id: int, image_size, region_size=None):
    """The exact class mean pattern a noise-free stack equals; layer -> array."""
    if not 0 <= class_id < spec.n_classes:
        raise ValidationError(f"class id {class_id} not in [0, {spec.n_classes})")
    h, w = image_size
    region_size = region_size or (min(h, w) // 2)
    regions = [SynthRegion(class_id, ((h - 1) / 2.0, (w - 1) / 2.0), region_size,
                           ring_class=(class_id + 1) % spec.n_classes)]
    signatures = class_signatures(spec)
    pattern = {
        name: _map_pattern(spec, signatures, name, stride, image_size, regions)
        for name, _channels, stride in MAP_LAYERS
    }
    background, class_vecs = signatures["fc7"]
    fc7 = background.copy()
    if spec.fc7_class_signal:
        fc7 = fc7 + class_vecs[class_id]
    pattern["fc7"] = fc7.reshape(FC7_CHANNELS, 1, 1)
    return pattern


def synthesize_stack(seed: int, class_id: int, image_size,
                     spec: SyntheticSpec = SyntheticSpec(),
                     region_size=None) -> FeatureStack:
    """One single-class stack with the signal centered in the image."""
    pattern = stack_pattern(spec, class_id, image_size, region_size)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(class_id)]))
    layers = {}
    for name in ("pool2", "conv4_3", "fc7"):
        values = pattern[name]
        if spec.noise > 0:
            values = values + spec.noise * rng.standard_normal(values.shape)
        layers[name] = FeatureMap(values.astype(np.float32))
    return FeatureStack(
        image_id=f"synth_{class_id}_{seed}",
        image_size=tuple(image_size),
        layers=layers,
        fc7_granularity="per_image",
    )


@dataclass(frozen=True)
class DatasetParams:
    """Geometry of a generated two-fold dataset.

    Images are square, partitioned into slot x slot cells; every cell
    hosts one labeled region whose size and placement snap to the
    evaluation grid so each grid cell is either fully labeled or fully
    background.
    """

    images_per_fold: int = 6
    image_hw: int = 120
    slot: int = 60
    region_sizes: tuple = (30, 40, 50)
    grid: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.image_hw % self.slot != 0:
            raise ValidationError("image size must be a multiple of the slot size")
        if any(s % self.grid != 0 or s > self.slot for s in self.region_sizes):
            raise ValidationError("region sizes must be grid-aligned and fit a slot")


def _image_regions(params: DatasetParams, spec: SyntheticSpec, rng):
    """Grid-aligned labeled regions for one image, one per slot."""
    regions = []
    per_side = params.image_hw // params.slot
    n_slots = per_side * per_side
    # near-balanced class mix per image (counts differ by at most one)
    class_ids = rng.permutation(np.arange(n_slots) % spec.n_classes)
    slot = 0
    pad = spec.ring_width + spec.shell_width
    for sy in range(per_side):
        for sx in range(per_side):
            size = int(rng.choice(params.region_sizes))
            span = (params.slot - size - 2 * pad) // params.grid
            if span < 0:
                raise ValidationError(
                    f"core {size}px plus ring/shell {pad}px does not fit "
                    f"a {params.slot}px slot"
                )
            oy = int(rng.integers(0, span + 1)) * params.grid
            ox = int(rng.integers(0, span + 1)) * params.grid
            y0 = sy * params.slot + pad + oy
            x0 = sx * params.slot + pad + ox
            class_id = int(class_ids[slot])
            ring_class = (class_id + 1 + int(rng.integers(0, spec.n_classes - 1))) \
                % spec.n_classes
            slot += 1
            center = (y0 + (size - 1) / 2.0, x0 + (size - 1) / 2.0)
            regions.append(SynthRegion(class_id, center, size,
                                       ring_class=ring_class, y0=y0, x0=x0))
    return regions


def generate_dataset(out_dir, spec: SyntheticSpec = SyntheticSpec(),
                     params: DatasetParams = DatasetParams()) -> str:
    """Write a two-fold synthetic dataset; returns the manifest path."""
    out_dir = os.fspath(out_dir)
    tensor_dir = os.path.join(out_dir, "tensors")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(tensor_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    signatures = class_signatures(spec)
    no_fc7_signal = replace(spec, fc7_class_signal=False)
    entries = []
    image_size = (params.image_hw, params.image_hw)
    for fold_index, fold in enumerate(tensor_store.TIME_TAGS):
        for i in range(params.images_per_fold):
            rng = np.random.default_rng(
                np.random.SeedSequence([params.seed, fold_index, i])
            )
            regions = _image_regions(params, spec, rng)
            image_id = f"{fold}_{i:03d}"
            layer_files = {}
            for name, _channels, stride in MAP_LAYERS:
                values = _map_pattern(no_fc7_signal, signatures, name, stride,
                                      image_size, regions)
                values = values + spec.noise * rng.standard_normal(values.shape)
                rel = os.path.join("tensors", f"{image_id}_{name}.hmt")
                tensor_store.write_tensor(
                    os.path.join(out_dir, rel), values.shape,
                    values.astype(np.float32).reshape(-1),
                )
                layer_files[name] = rel
            # Per-image fc7 is scene context, identical for every patch of an
            # image. Default is no jitter: with only a handful of synthetic
            # images, per-image noise would standardize into 4096
            # image-fingerprint dimensions that invite memorization.
            fc7 = signatures["fc7"][0].copy()
            if spec.fc7_noise > 0:
                fc7 = fc7 + spec.fc7_noise * rng.standard_normal(FC7_CHANNELS)
            rel = os.path.join("tensors", f"{image_id}_fc7.hmt")
            tensor_store.write_tensor(os.path.join(out_dir, rel), (FC7_CHANNELS,),
                                      fc7.astype(np.float32))
            layer_files["fc7"] = rel

            label_mask = masks.new_label_mask(image_size)
            change_mask = np.zeros(image_size, dtype=bool)
            for r in regions:
                label_mask[r.y0:r.y0 + r.core_size, r.x0:r.x0 + r.core_size] = r.class_id
                rw = spec.ring_width
                change_mask[max(0, r.y0 - rw):r.y0 + r.core_size + rw,
                            max(0, r.x0 - rw):r.x0 + r.core_size + rw] = True
            label_rel = os.path.join("masks", f"{image_id}_label.png")
            change_rel = os.path.join("masks", f"{image_id}_change.png")
            masks.write_mask(label_mask, os.path.join(out_dir, label_rel))
            masks.write_mask(change_mask, os.path.join(out_dir, change_rel))

            entries.append(tensor_store.ManifestEntry(
                image_id=image_id,
                time_tag=fold,
                layer_files=layer_files,
                image_size=image_size,
                change_mask_path=change_rel,
                label_mask_path=label_rel,
                fc7_granularity="per_image",
            ))
    manifest = tensor_store.DatasetManifest(entries=entries, root=out_dir)
    manifest_path = os.path.join(out_dir, "manifest.json")
    tensor_store.save_manifest(manifest, manifest_path)
    return manifest_path


# Presets used by the CLI and the acceptance suite. `default` is the easy
# end-to-end dataset; `ablation` uses noisier, strongly center-concentrated
# data so the weighted-vs-uniform and multi-vs-single margins are visible.
PRESETS = {
    "default": (SyntheticSpec(), DatasetParams()),
    "ablation": (
        SyntheticSpec(noise=0.55, bump_base=0.15, bump_boost=1.1, bump_width_frac=0.4),
        DatasetParams(images_per_fold=4, seed=11),
    ),
}
