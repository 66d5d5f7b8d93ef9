"""Finite-difference verification of the analytic gradients.

Checks the smooth part of the objective: hand model, projection, 3D/2D
keypoint losses, heatmap loss and regulariser through the full parameter
vector, plus the silhouette cross-entropy on fractional predictions. The
rasterizer's surrogate gradient is not a derivative and is excluded.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import objectives as obj
from .camera import pack
from .dataset import SynthRanges
from .hand_model import SkeletonAdapter
from .optim import finite_difference_grad
from .scene import Observations, SceneObjective, predict
from .template import HandTemplate, make_toy_template

TOLERANCE = 1e-4


def relative_error(analytic, numeric) -> np.ndarray:
    """Per-coordinate ``|a - n| / max(|a|, |n|, floor)``.

    The floor, ``1e-8 + 1e-6 * max(1, max|n|)``, keeps coordinates whose
    true derivative is (near) zero from dividing round-off by round-off.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    floor = 1e-8 + 1e-6 * max(1.0, float(np.max(np.abs(n))) if n.size else 1.0)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    worst_index: int
    passed: bool


@dataclass
class GradcheckReport:
    checks: list[CheckResult] = field(default_factory=list)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    def lines(self) -> list[str]:
        return [f"{'ok  ' if c.passed else 'FAIL'} {c.name}: max rel err {c.max_rel_error:.2e} (coord {c.worst_index})"
                for c in self.checks]


def _record(report, name, analytic, numeric):
    err = relative_error(analytic, numeric)
    worst = int(np.argmax(err)) if err.size else 0
    value = float(err.max()) if err.size else 0.0
    report.checks.append(CheckResult(name, value, worst, value < report.tolerance))


def check_scene_point(tpl: HandTemplate, rng: np.random.Generator, ranges: SynthRanges, h: float,
                      weights: obj.LossWeights | None = None, adapter: SkeletonAdapter | None = None):
    """Analytic and numeric gradients of the smooth objective at one random point."""
    target = predict(ranges.sample(rng, n_theta=3 * tpl.k), tpl)
    obs = Observations(target.keypoints_2d, None, target.keypoints_3d)
    weights = weights or obj.LossWeights(*rng.uniform(0.5, 2.0, 5))
    objective = SceneObjective(tpl, obs, weights, include_mask=False)
    x = pack(ranges.sample(rng, n_theta=3 * tpl.k))
    analytic = objective.evaluate(x, adapter=adapter).grad
    numeric = finite_difference_grad(lambda v: objective.evaluate(v, need_grad=False, adapter=adapter).breakdown.total,
                                     x, h)
    return analytic, numeric


def run_gradcheck(n_points: int = 20, seed: int = 0, h: float = 1e-5, tpl: HandTemplate | None = None,
                  tolerance: float = TOLERANCE) -> GradcheckReport:
    tpl = tpl or make_toy_template()
    rng = np.random.default_rng(seed)
    ranges = SynthRanges()
    report = GradcheckReport(tolerance=tolerance)
    for i in range(n_points):
        analytic, numeric = check_scene_point(tpl, rng, ranges, h)
        _record(report, f"objective point {i}", analytic, numeric)

    # adapter in the 3D branch
    d = 3 * tpl.n_keypoints
    adapter = SkeletonAdapter(np.eye(d) + 0.05 * rng.standard_normal((d, d)), rng.normal(0, 1, d))
    analytic, numeric = check_scene_point(tpl, rng, ranges, h, adapter=adapter)
    _record(report, "objective with skeleton adapter", analytic, numeric)

    # cross-entropy and squared error on fractional silhouettes
    pred = rng.uniform(0.05, 0.95, (8, 8))
    gt = (rng.random((8, 8)) > 0.5).astype(float)
    _record(report, "silhouette cross-entropy", obj.mask_bce_grad(pred, gt).ravel(),
            finite_difference_grad(lambda p: obj.mask_bce(p.reshape(8, 8), gt), pred.ravel(), h))
    _record(report, "silhouette squared error", obj.loss_mask_grad(pred, gt).ravel(),
            finite_difference_grad(lambda p: obj.loss_mask(p.reshape(8, 8), gt), pred.ravel(), h))
    return report
