"""Image and mask files, and simple colour renderings of silhouettes."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

SKIN = (224, 172, 105)
BACKGROUND = (46, 52, 64)


def _to_uint8(array) -> np.ndarray:
    array = np.asarray(array)
    if array.dtype == np.uint8:
        return array
    return np.clip(np.rint(array), 0, 255).astype(np.uint8)


def save_image(path, image) -> Path:
    """Write an (H, W) or (H, W, 3) array as PNG (or any Pillow format by suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(image)).save(path)
    return path


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im).copy()


def save_mask(path, mask) -> Path:
    """8-bit grayscale, 0 = background and 255 = hand; PGM (P5) for a
    ``.pgm`` suffix, otherwise PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.where(np.asarray(mask) > 0.5, 255, 0).astype(np.uint8)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else None  # Pillow writes L-mode PPM as P5
    Image.fromarray(pixels).save(path, format=fmt)
    return path


def load_mask(path) -> np.ndarray:
    """Read a mask written by :func:`save_mask` as a float 0/1 array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask not found: {path}")
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("L"))
    return (pixels >= 128).astype(np.float64)


def colorize_silhouette(mask, hand=SKIN, background=BACKGROUND) -> np.ndarray:
    """RGB uint8 image: hand colour where the mask is set."""
    mask = np.asarray(mask) > 0.5
    out = np.empty(mask.shape + (3,), dtype=np.uint8)
    out[...] = np.array(background, dtype=np.uint8)
    out[mask] = np.array(hand, dtype=np.uint8)
    return out


def draw_overlay(image, keypoints_2d=None, silhouette=None, reference_2d=None, radius: float = 1.0) -> np.ndarray:
    """Keypoints (red; optional reference in green) and a silhouette tint over an image.

    The output has the same height and width as ``image``.
    """
    base = np.asarray(image)
    if base.ndim == 2:
        base = np.repeat(base[:, :, None], 3, axis=2)
    rgb = _to_uint8(base).copy()
    if silhouette is not None:
        m = np.asarray(silhouette) > 0.5
        rgb[m] = (0.6 * rgb[m] + 0.4 * np.array([80, 160, 255])).astype(np.uint8)
    im = Image.fromarray(rgb)
    draw = ImageDraw.Draw(im)
    for points, colour in ((reference_2d, (60, 220, 60)), (keypoints_2d, (230, 40, 40))):
        if points is None:
            continue
        for x, y in np.asarray(points, dtype=np.float64):
            draw.ellipse([x - radius, y - radius, x + radius, y + radius], fill=colour)
    return np.asarray(im)
