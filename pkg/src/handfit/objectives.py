"""Heatmap targets and the terms of the multi-task objective.

Every loss comes as a pair: ``loss_x(pred, gt)`` returns the scalar and
``loss_x_grad(pred, gt)`` its gradient with respect to ``pred``. Data
terms use mean reduction over joints or pixels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvariantError

BCE_EPS = 1e-7
HEATMAP_SIGMA = 2.5

TERMS = ("sfe", "3d", "2d", "mask", "reg")
UNITS = {
    "sfe": "dimensionless",
    "3d": "mm^2",
    "2d": "px",
    "mask": "dimensionless",
    "reg": "param^2",
}


def _same_shape(pred, gt, what: str):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"{what}: prediction {pred.shape} vs target {gt.shape}")
    return pred, gt


# ---------------------------------------------------------------------------
# heatmaps


def _pixel_centres(height: int, width: int):
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    return xs, ys


def gaussian_heatmap(joints2d, sigma: float = HEATMAP_SIGMA, height: int = 64, width: int = 64) -> np.ndarray:
    """One unnormalised Gaussian per joint, sampled at pixel centres.

    ``maps[k, row, col] = exp(-|c - joint_k|^2 / (2 sigma^2))`` with
    ``c = (col + 0.5, row + 0.5)``; the peak is 1 at the joint itself.
    """
    if not sigma > 0:
        raise InvariantError(f"heatmap sigma must be positive, got {sigma}")
    joints2d = np.asarray(joints2d, dtype=np.float64)
    if joints2d.ndim != 2 or joints2d.shape[1] != 2:
        raise DimensionError(f"joints must be (n, 2), got {joints2d.shape}")
    xs, ys = _pixel_centres(height, width)
    # separable: exp(-(dx^2 + dy^2)/2s^2) = gx * gy
    gx = np.exp(-((xs[None, :] - joints2d[:, :1]) ** 2) / (2 * sigma**2))
    gy = np.exp(-((ys[None, :] - joints2d[:, 1:]) ** 2) / (2 * sigma**2))
    return gy[:, :, None] * gx[:, None, :]


def gaussian_heatmap_backward(joints2d, grad_maps, sigma: float = HEATMAP_SIGMA) -> np.ndarray:
    """Gradient with respect to the joint locations, (n, 2)."""
    joints2d = np.asarray(joints2d, dtype=np.float64)
    grad_maps = np.asarray(grad_maps, dtype=np.float64)
    _, height, width = grad_maps.shape
    xs, ys = _pixel_centres(height, width)
    dx = xs[None, :] - joints2d[:, :1]
    dy = ys[None, :] - joints2d[:, 1:]
    gx = np.exp(-(dx**2) / (2 * sigma**2))
    gy = np.exp(-(dy**2) / (2 * sigma**2))
    # d map / d joint_x = map * dx / sigma^2
    weighted = grad_maps * gy[:, :, None] * gx[:, None, :]
    g_x = np.einsum("khw,kw->k", weighted, dx) / sigma**2
    g_y = np.einsum("khw,kh->k", weighted, dy) / sigma**2
    return np.stack([g_x, g_y], axis=1)


# ---------------------------------------------------------------------------
# feature-extractor losses


def heatmap_mse(pred, gt) -> float:
    pred, gt = _same_shape(pred, gt, "heatmaps")
    return float(np.mean((pred - gt) ** 2))


def heatmap_mse_grad(pred, gt) -> np.ndarray:
    pred, gt = _same_shape(pred, gt, "heatmaps")
    return 2.0 * (pred - gt) / pred.size


def mask_bce(pred, gt, eps: float = BCE_EPS) -> float:
    """Mean pixel-wise binary cross-entropy; predictions clamped to [eps, 1 - eps]."""
    pred, gt = _same_shape(pred, gt, "silhouettes")
    p = np.clip(pred, eps, 1.0 - eps)
    return float(np.mean(-(gt * np.log(p) + (1.0 - gt) * np.log1p(-p))))


def mask_bce_grad(pred, gt, eps: float = BCE_EPS) -> np.ndarray:
    """Gradient of :func:`mask_bce`; zero where the clamp is active."""
    pred, gt = _same_shape(pred, gt, "silhouettes")
    p = np.clip(pred, eps, 1.0 - eps)
    g = (p - gt) / (p * (1.0 - p)) / pred.size
    return np.where((pred > eps) & (pred < 1.0 - eps), g, 0.0)


def stage_loss(heat_pred, heat_gt, mask_pred, mask_gt) -> float:
    """Heatmap MSE plus silhouette BCE for one feature-extractor stage."""
    return heatmap_mse(heat_pred, heat_gt) + mask_bce(mask_pred, mask_gt)


def sfe_loss(stage_losses) -> float:
    stage_losses = list(stage_losses)
    if not stage_losses:
        raise ValueError("sfe_loss needs at least one stage")
    return float(sum(stage_losses))


# ---------------------------------------------------------------------------
# keypoint, silhouette and regularisation losses


def loss_3d(pred, gt) -> float:
    """Mean over joints of the squared Euclidean distance, mm^2."""
    pred, gt = _same_shape(pred, gt, "3D joints")
    return float(np.mean(np.sum((pred - gt) ** 2, axis=-1)))


def loss_3d_grad(pred, gt) -> np.ndarray:
    pred, gt = _same_shape(pred, gt, "3D joints")
    return 2.0 * (pred - gt) / pred.shape[0]


def loss_2d(pred, gt) -> float:
    """Mean absolute coordinate error, pixels."""
    pred, gt = _same_shape(pred, gt, "2D joints")
    return float(np.mean(np.abs(pred - gt)))


def loss_2d_grad(pred, gt) -> np.ndarray:
    pred, gt = _same_shape(pred, gt, "2D joints")
    return np.sign(pred - gt) / pred.size


def loss_mask(pred, gt) -> float:
    """Mean squared pixel difference between silhouettes."""
    pred, gt = _same_shape(pred, gt, "silhouettes")
    return float(np.mean((pred - gt) ** 2))


def loss_mask_grad(pred, gt) -> np.ndarray:
    pred, gt = _same_shape(pred, gt, "silhouettes")
    return 2.0 * (pred - gt) / pred.size


def loss_reg(beta, theta) -> float:
    beta = np.asarray(beta, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return float(beta @ beta + theta @ theta)


def loss_reg_grad(beta, theta):
    return 2.0 * np.asarray(beta, dtype=np.float64), 2.0 * np.asarray(theta, dtype=np.float64)


# ---------------------------------------------------------------------------
# weighting


@dataclass(frozen=True)
class LossWeights:
    sfe: float = 1.0
    w3d: float = 1.0
    w2d: float = 1.0
    mask: float = 1.0
    reg: float = 1.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not (np.isfinite(value) and value >= 0):
                raise InvariantError(f"loss weight {name} must be finite and non-negative, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {"sfe": self.sfe, "3d": self.w3d, "2d": self.w2d, "mask": self.mask, "reg": self.reg}

    @classmethod
    def from_sequence(cls, values) -> "LossWeights":
        """Build from ``(w_sfe, w_3d, w_2d, w_mask, w_reg)``."""
        values = [float(v) for v in values]
        if len(values) != 5:
            raise ValueError("expected five weights: w_sfe,w_3d,w_2d,w_mask,w_reg")
        return cls(*values)


@dataclass
class LossBreakdown:
    """Per-term values (``None`` when the term was not evaluated) and the
    weighted total."""

    terms: dict[str, float | None]
    weights: LossWeights
    total: float
    units: dict[str, str] = field(default_factory=lambda: dict(UNITS))

    def as_dict(self) -> dict:
        return {"total": self.total, **{f"L_{k}": v for k, v in self.terms.items()}}


def total_loss(terms: dict, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Weighted sum of whichever terms are present.

    ``terms`` maps names from :data:`TERMS` to scalars; missing names and
    ``None`` values contribute nothing.
    """
    unknown = set(terms) - set(TERMS)
    if unknown:
        raise KeyError(f"unknown loss terms: {sorted(unknown)}")
    w = weights.as_dict()
    values = {name: (None if terms.get(name) is None else float(terms[name])) for name in TERMS}
    total = sum(w[name] * v for name, v in values.items() if v is not None)
    return LossBreakdown(values, weights, float(total))
