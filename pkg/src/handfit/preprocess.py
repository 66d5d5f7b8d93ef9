"""Hand-centred square crops, keypoint remapping and image normalisation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvariantError

CENTER_KEYPOINT = 9  # middle-finger MCP
ENLARGE = 1.2
MIN_SIDE = 64
TARGET_SIDE = 256


@dataclass(frozen=True)
class CropRect:
    """Square crop ``[x0, x0 + side) x [y0, y0 + side)`` in source pixels.

    The rectangle may extend beyond the source image; those pixels are
    filled by edge replication.
    """

    x0: float
    y0: float
    side: float

    @property
    def x1(self) -> float:
        return self.x0 + self.side

    @property
    def y1(self) -> float:
        return self.y0 + self.side

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return (p[:, 0] >= self.x0) & (p[:, 0] <= self.x1) & (p[:, 1] >= self.y0) & (p[:, 1] <= self.y1)


def _center(kp, center, center_index):
    if center is not None:
        return np.asarray(center, dtype=np.float64).reshape(2)
    if kp.shape[0] <= center_index:
        raise DimensionError(f"no keypoint {center_index} to centre on ({kp.shape[0]} given)")
    return kp[center_index]


def crop_side(keypoints_2d, center=None, center_index: int = CENTER_KEYPOINT, enlarge: float = ENLARGE) -> float:
    """Side of the centred square: twice the largest per-axis deviation from
    the centre point, then enlarged."""
    kp = np.asarray(keypoints_2d, dtype=np.float64)
    deviation = float(np.max(np.abs(kp - _center(kp, center, center_index))))
    return enlarge * 2.0 * deviation


def crop_rect(keypoints_2d, center=None, center_index: int = CENTER_KEYPOINT, enlarge: float = ENLARGE,
              min_side: float = MIN_SIDE) -> CropRect:
    """Square of side :func:`crop_side` centred on ``center`` (default: the
    middle-finger MCP keypoint); ``min_side`` when all keypoints coincide."""
    kp = np.asarray(keypoints_2d, dtype=np.float64)
    if kp.ndim != 2 or kp.shape[1] != 2 or kp.shape[0] == 0:
        raise DimensionError(f"keypoints must be (n, 2), got {kp.shape}")
    if not np.all(np.isfinite(kp)):
        raise InvariantError("keypoints must be finite")
    c = _center(kp, center, center_index)
    side = crop_side(kp, c, center_index, enlarge)
    if side <= 0:
        side = float(min_side)
    return CropRect(float(c[0] - side / 2), float(c[1] - side / 2), float(side))


def crop_hand(keypoints_2d, image, center=None, center_index: int = CENTER_KEYPOINT, enlarge: float = ENLARGE,
              min_side: float = MIN_SIDE):
    """Square crop around the centre keypoint.

    The pixel block covers the rectangle rounded outward to whole pixels;
    parts outside the image repeat the nearest edge pixel.

    Returns:
        (cropped image, CropRect)
    """
    image = np.asarray(image)
    if image.ndim not in (2, 3) or image.shape[0] == 0 or image.shape[1] == 0:
        raise DimensionError(f"image must be (H, W) or (H, W, C), got {image.shape}")
    rect = crop_rect(keypoints_2d, center, center_index, enlarge, min_side)
    c0, r0 = int(np.floor(rect.x0)), int(np.floor(rect.y0))
    c1, r1 = int(np.ceil(rect.x1)), int(np.ceil(rect.y1))
    rows = np.clip(np.arange(r0, r1), 0, image.shape[0] - 1)
    cols = np.clip(np.arange(c0, c1), 0, image.shape[1] - 1)
    return image[np.ix_(rows, cols)], rect


def remap_keypoints(keypoints, rect: CropRect, target: int = TARGET_SIDE) -> np.ndarray:
    """Source pixels to crop coordinates scaled to ``target`` x ``target``."""
    if not rect.side > 0:
        raise InvariantError("crop rectangle has zero size")
    kp = np.asarray(keypoints, dtype=np.float64)
    return (kp - np.array([rect.x0, rect.y0])) * (target / rect.side)


def unmap_keypoints(keypoints, rect: CropRect, target: int = TARGET_SIDE) -> np.ndarray:
    """Inverse of :func:`remap_keypoints`."""
    if not rect.side > 0:
        raise InvariantError("crop rectangle has zero size")
    kp = np.asarray(keypoints, dtype=np.float64)
    return kp * (rect.side / target) + np.array([rect.x0, rect.y0])


def normalize_image(image) -> np.ndarray:
    """Zero mean, unit variance over all pixels and channels jointly.

    A constant image maps to zeros.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.size == 0:
        raise DimensionError("cannot normalise an empty image")
    std = x.std()
    centred = x - x.mean()
    if std == 0:
        return np.zeros_like(x)
    return centred / std
