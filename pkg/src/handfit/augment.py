"""Photometric image augmentation with unchanged keypoints.

Four transformation groups are available: blur, noise, occlusion and
photometric. Each call draws how many enabled groups to apply (at least
one, at most ``max_groups``), picks them at random and applies them in
the drawn order. Geometry is never touched, so keypoints pass through.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvariantError

GROUPS = ("blur", "noise", "occlusion", "photometric")


@dataclass
class AugmentationConfig:
    groups: tuple[str, ...] = GROUPS
    max_groups: int = 4
    gaussian_sigma: tuple[float, float] = (1.0, 3.0)
    mean_kernel: tuple[int, int] = (3, 9)
    noise_std: float = 0.05 * 255
    dropout_fraction: float = 0.30
    salt_pepper_fraction: float = 0.20
    add_range: tuple[float, float] = (-20.0, 20.0)
    multiply_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        self.groups = tuple(self.groups)
        self.validate()

    def validate(self) -> "AugmentationConfig":
        unknown = set(self.groups) - set(GROUPS)
        if unknown:
            raise InvariantError(f"unknown augmentation groups: {sorted(unknown)}")
        if not 0 <= self.max_groups <= 4:
            raise InvariantError("max_groups must be between 0 and 4")
        checks = [
            (1.0 <= self.gaussian_sigma[0] <= self.gaussian_sigma[1] <= 3.0, "gaussian_sigma within [1, 3]"),
            (3 <= self.mean_kernel[0] <= self.mean_kernel[1] <= 9, "mean_kernel within [3, 9]"),
            (0 <= self.noise_std <= 0.05 * 255, "noise_std within [0, 12.75]"),
            (0 <= self.dropout_fraction <= 0.30, "dropout_fraction within [0, 0.3]"),
            (0 <= self.salt_pepper_fraction <= 0.20, "salt_pepper_fraction within [0, 0.2]"),
            (-20 <= self.add_range[0] <= self.add_range[1] <= 20, "add_range within [-20, 20]"),
            (0.5 <= self.multiply_range[0] <= self.multiply_range[1] <= 1.5, "multiply_range within [0.5, 1.5]"),
        ]
        for ok, what in checks:
            if not ok:
                raise InvariantError(f"augmentation range out of bounds: {what}")
        return self


# ---------------------------------------------------------------------------
# individual transforms; all take and return float arrays in [0, 255]


def _spatial_sigma(image, sigma):
    # no smoothing across colour channels
    return (sigma, sigma, 0) if image.ndim == 3 else sigma


def gaussian_blur(image, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(np.asarray(image, dtype=np.float64), _spatial_sigma(image, sigma), mode="nearest")


def mean_blur(image, kernel: int) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    size = (kernel, kernel, 1) if image.ndim == 3 else kernel
    return ndimage.uniform_filter(image, size=size, mode="nearest")


def add_gaussian_noise(image, std: float, rng: np.random.Generator) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return np.clip(image + rng.normal(0.0, std, image.shape), 0, 255)


def coarse_dropout(image, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Zero one contiguous rectangle covering about ``fraction`` of the image."""
    image = np.array(image, dtype=np.float64)
    h, w = image.shape[:2]
    if fraction <= 0:
        return image
    aspect = rng.uniform(0.5, 2.0)
    area = fraction * h * w
    rh = int(min(h, max(1, round(np.sqrt(area * aspect)))))
    rw = int(min(w, max(1, round(area / rh))))
    r0 = int(rng.integers(0, h - rh + 1))
    c0 = int(rng.integers(0, w - rw + 1))
    image[r0:r0 + rh, c0:c0 + rw] = 0
    return image


def salt_and_pepper(image, fraction: float, rng: np.random.Generator) -> np.ndarray:
    image = np.array(image, dtype=np.float64)
    h, w = image.shape[:2]
    hit = rng.random((h, w)) < fraction
    salt = rng.random((h, w)) < 0.5
    image[hit & salt] = 255
    image[hit & ~salt] = 0
    return image


def add_value(image, value: float) -> np.ndarray:
    return np.clip(np.asarray(image, dtype=np.float64) + value, 0, 255)


def adjust_brightness(image, factor: float) -> np.ndarray:
    return np.clip(np.asarray(image, dtype=np.float64) * factor, 0, 255)


def adjust_contrast(image, factor: float) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    mean = image.mean()
    return np.clip(mean + factor * (image - mean), 0, 255)


# ---------------------------------------------------------------------------
# groups


def _blur(image, cfg, rng):
    if rng.random() < 0.5:
        return gaussian_blur(image, rng.uniform(*cfg.gaussian_sigma))
    sizes = np.arange(cfg.mean_kernel[0], cfg.mean_kernel[1] + 1)
    sizes = sizes[sizes % 2 == 1]
    return mean_blur(image, int(rng.choice(sizes)))


def _noise(image, cfg, rng):
    return add_gaussian_noise(image, cfg.noise_std, rng)


def _occlusion(image, cfg, rng):
    if rng.random() < 0.5:
        return coarse_dropout(image, rng.uniform(0, cfg.dropout_fraction), rng)
    return salt_and_pepper(image, rng.uniform(0, cfg.salt_pepper_fraction), rng)


def _photometric(image, cfg, rng):
    choice = rng.integers(3)
    if choice == 0:
        return add_value(image, rng.uniform(*cfg.add_range))
    if choice == 1:
        return adjust_brightness(image, rng.uniform(*cfg.multiply_range))
    return adjust_contrast(image, rng.uniform(*cfg.multiply_range))


_APPLY = {"blur": _blur, "noise": _noise, "occlusion": _occlusion, "photometric": _photometric}


def augment(image, keypoints, config: AugmentationConfig | None = None, seed: int | None = None):
    """Randomly augment ``image``; ``keypoints`` are returned as given.

    Args:
        image: (H, W) or (H, W, C) array with values in [0, 255].
        keypoints: any array; passed through untouched.
        config: group selection and parameter ranges.
        seed: overrides ``config.seed``.

    Returns:
        (augmented image with the input dtype, keypoints, list of applied groups)
    """
    cfg = (config or AugmentationConfig()).validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    src = np.asarray(image)
    out = src.astype(np.float64)
    applied: list[str] = []
    enabled = list(cfg.groups)
    limit = min(cfg.max_groups, len(enabled))
    if limit > 0:
        k = int(rng.integers(1, limit + 1))
        order = rng.permutation(len(enabled))[:k]
        for i in order:
            name = enabled[i]
            out = _APPLY[name](out, cfg, rng)
            applied.append(name)
    out = np.clip(out, 0, 255)
    if np.issubdtype(src.dtype, np.integer):
        out = np.rint(out).astype(src.dtype)
    elif not applied:
        out = src.copy()
    return out, keypoints, applied
