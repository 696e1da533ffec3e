"""Label masks, change masks, and colored overlays.

Label masks are uint8 images: 0 = car, 1 = building, 2 = rubble,
255 = unlabeled/ignore. Change masks are boolean (stored as 0/255
grayscale PNG). Overlay colors follow the annotation convention:
car blue, building green, rubble red.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import DataError, ValidationError

IGNORE = 255
CLASS_NAMES = ("car", "building", "rubble")
CLASS_COLORS = ((0, 0, 255), (0, 255, 0), (255, 0, 0))  # RGB


def new_label_mask(image_size) -> np.ndarray:
    return np.full(tuple(image_size), IGNORE, dtype=np.uint8)


def write_mask(mask: np.ndarray, path) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    if mask.dtype == bool:
        img = Image.fromarray((mask * np.uint8(255)), mode="L")
    else:
        img = Image.fromarray(mask.astype(np.uint8), mode="L")
    img.save(tmp, format="PNG")
    os.replace(tmp, path)


def read_label_mask(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"label mask not found: {path}")
    return np.asarray(Image.open(path).convert("L"), dtype=np.uint8)


def read_change_mask(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"change mask not found: {path}")
    return np.asarray(Image.open(path).convert("L")) != 0


def render_overlay(labels: np.ndarray, base_image=None, alpha: float = 0.5) -> Image.Image:
    """Color the labeled pixels; unlabeled pixels stay transparent, or show
    the base image unchanged when one is given."""
    labels = np.asarray(labels)
    h, w = labels.shape
    color = np.zeros((h, w, 3), dtype=np.uint8)
    labeled = labels != IGNORE
    for value, rgb in enumerate(CLASS_COLORS):
        color[labels == value] = rgb
    if base_image is None:
        rgba = np.zeros((h, w, 4), dtype=np.uint8)
        rgba[..., :3] = color
        rgba[..., 3] = np.where(labeled, 255, 0).astype(np.uint8)
        return Image.fromarray(rgba, mode="RGBA")
    base = np.asarray(base_image)
    if base.ndim == 2:
        base = np.repeat(base[:, :, None], 3, axis=2)
    if base.shape[:2] != (h, w):
        raise ValidationError(
            f"base image {base.shape[:2]} does not match mask {labels.shape}"
        )
    out = base[..., :3].astype(np.float64)
    blend = labeled[..., None]
    out = np.where(blend, (1 - alpha) * out + alpha * color.astype(np.float64), out)
    return Image.fromarray(np.round(out).astype(np.uint8), mode="RGB")


def save_overlay(labels: np.ndarray, path, base_image=None, alpha: float = 0.5) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    render_overlay(labels, base_image=base_image, alpha=alpha).save(tmp, format="PNG")
    os.replace(tmp, path)
