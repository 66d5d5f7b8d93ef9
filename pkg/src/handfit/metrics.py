"""Keypoint error metrics: end-point error, PCK curve and its AUC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

DEFAULT_THRESHOLDS = np.arange(20.0, 51.0, 1.0)  # mm, 31 points


def _as_joint_sets(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.ndim < 2 or pred.shape[-1] != 3:
        raise DimensionError(f"joint sets must end in (..., J, 3), got {pred.shape}")
    return pred, gt


def joint_errors(pred, gt) -> np.ndarray:
    """Per-joint Euclidean distances."""
    pred, gt = _as_joint_sets(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1)


def epe(pred, gt) -> float:
    """Mean per-joint Euclidean distance of one (J, 3) pair, in the input unit."""
    pred, gt = _as_joint_sets(pred, gt)
    if pred.ndim != 2:
        raise DimensionError(f"epe expects a single (J, 3) set, got {pred.shape}")
    return float(np.mean(joint_errors(pred, gt)))


def pck_curve(preds, gts, thresholds=DEFAULT_THRESHOLDS) -> np.ndarray:
    """Fraction of all joints (pooled over samples) with error <= threshold.

    Args:
        preds: sequence of (J, 3) predictions, or an (S, J, 3) array.
        gts: matching ground truth.
        thresholds: 1-D array of distances.
    """
    preds = [np.asarray(p, dtype=np.float64) for p in preds]
    gts = [np.asarray(g, dtype=np.float64) for g in gts]
    if not preds:
        raise ValueError("pck_curve needs at least one sample")
    if len(preds) != len(gts):
        raise DimensionError(f"{len(preds)} predictions for {len(gts)} ground-truth sets")
    errors = np.concatenate([joint_errors(p, g).reshape(-1) for p, g in zip(preds, gts)])
    thresholds = np.asarray(thresholds, dtype=np.float64)
    return (errors[None, :] <= thresholds[:, None]).mean(axis=1)


def auc(pck, thresholds=DEFAULT_THRESHOLDS) -> float:
    """Trapezoidal area under the PCK curve divided by the threshold span."""
    pck = np.asarray(pck, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size < 2:
        raise ValueError("auc needs at least two thresholds")
    if pck.shape != thresholds.shape:
        raise DimensionError(f"{pck.size} PCK values for {thresholds.size} thresholds")
    span = thresholds[-1] - thresholds[0]
    if span <= 0:
        raise ValueError("thresholds must be increasing")
    area = np.sum((pck[1:] + pck[:-1]) * np.diff(thresholds)) / 2.0
    return float(area / span)


@dataclass
class MetricsReport:
    mean_epe: float
    thresholds: np.ndarray
    pck: np.ndarray
    auc: float
    per_sample_epe: list[float] = field(default_factory=list)
    sample_ids: list[str] = field(default_factory=list)


def evaluate(preds, gts, thresholds=DEFAULT_THRESHOLDS, sample_ids=None) -> MetricsReport:
    """EPE, PCK and AUC over a list of samples.

    An empty list gives a report with NaN EPE, zero PCK and zero AUC.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    preds, gts = list(preds), list(gts)
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(preds))]
    if not preds:
        return MetricsReport(float("nan"), thresholds, np.zeros_like(thresholds), 0.0, [], [])
    per_sample = [epe(p, g) for p, g in zip(preds, gts)]
    curve = pck_curve(preds, gts, thresholds)
    return MetricsReport(float(np.mean(per_sample)), thresholds, curve, auc(curve, thresholds), per_sample, ids)
