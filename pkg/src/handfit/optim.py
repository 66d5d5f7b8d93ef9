"""Adam-based fitting of hand parameters to observations.

The optimizer works on an internal vector ``z`` rather than the packed 61
parameters: translation is divided by ``translation_scale`` and the scale
is stored as ``log s``, so a single step size suits every block and ``s``
can never become non-positive.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from . import objectives as obj
from .camera import (
    N_PARAMS,
    S_INDEX,
    T_SLICE,
    VIEW_SLICE,
    FullParams,
    ViewParams,
    pack,
    project_points,
    unpack,
)
from .errors import DegenerateError, DimensionError, DivergenceError, InvariantError
from .hand_model import SkeletonAdapter, hand_forward, rest_keypoints
from .renderer import RasterConfig, rasterize_forward
from .scene import Evaluation, Observations, SceneObjective
from .template import HandTemplate

log = logging.getLogger(__name__)


class DifferentiableObjective(Protocol):
    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...


def finite_difference_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5, free=None) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    Args:
        f: scalar function of a vector.
        x: point of evaluation.
        h: step, must be positive.
        free: optional boolean mask; other coordinates get a zero gradient.

    Returns:
        Array shaped like ``x``.
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    free = np.ones(x.shape, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    grad = np.zeros_like(x)
    for i in np.flatnonzero(free):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        fp, fm = float(f(xp)), float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ArithmeticError(f"objective is not finite around coordinate {i}")
        grad.flat[i] = (fp - fm) / (2 * h)
    return grad


# ---------------------------------------------------------------------------
# Adam


@dataclass
class OptimizerConfig:
    """Fitting hyper-parameters.

    ``view_only_iters`` iterations move only ``t, s, r`` before the pose
    and shape are released; ``translation_scale`` is pixels per unit of
    the internal translation coordinate.
    """

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 500
    tol: float = 1e-6
    patience: int = 20
    view_only_iters: int = 100
    translation_scale: float = 10.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "OptimizerConfig":
        if not self.lr > 0:
            raise InvariantError(f"step size must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise InvariantError(f"{name} must lie in [0, 1), got {value}")
        if not self.eps > 0:
            raise InvariantError(f"eps must be positive, got {self.eps}")
        if self.max_iters < 0 or self.patience < 1 or self.view_only_iters < 0:
            raise InvariantError("max_iters and view_only_iters must be >= 0, patience >= 1")
        if not self.translation_scale > 0:
            raise InvariantError("translation_scale must be positive")
        return self


@dataclass
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def init(cls, params) -> "AdamState":
        params = np.array(params, dtype=np.float64)
        return cls(params, np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(state: AdamState, grad, config: OptimizerConfig) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise DimensionError(f"gradient {grad.shape} does not match parameters {state.params.shape}")
    t = state.step + 1
    m = config.beta1 * state.m + (1 - config.beta1) * grad
    v = config.beta2 * state.v + (1 - config.beta2) * grad**2
    m_hat = m / (1 - config.beta1**t)
    v_hat = v / (1 - config.beta2**t)
    params = state.params - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return AdamState(params, m, v, t)


# ---------------------------------------------------------------------------
# internal parametrisation


def to_internal(x, translation_scale: float) -> np.ndarray:
    z = np.array(x, dtype=np.float64)
    z[T_SLICE] /= translation_scale
    z[S_INDEX] = np.log(z[S_INDEX])
    return z


def from_internal(z, translation_scale: float) -> np.ndarray:
    x = np.array(z, dtype=np.float64)
    x[T_SLICE] *= translation_scale
    with np.errstate(over="ignore"):  # overflow surfaces as a divergence
        x[S_INDEX] = np.exp(x[S_INDEX])
    return x


def _internal_grad(grad_x, x, translation_scale: float) -> np.ndarray:
    g = np.array(grad_x, dtype=np.float64)
    g[T_SLICE] *= translation_scale
    g[S_INDEX] *= x[S_INDEX]  # ds/dlog s = s
    return g


# ---------------------------------------------------------------------------
# problems and results


@dataclass
class FitProblem:
    template: HandTemplate
    observations: Observations
    init: FullParams
    weights: obj.LossWeights = field(default_factory=obj.LossWeights)
    free: np.ndarray = field(default_factory=lambda: np.ones(N_PARAMS, dtype=bool))
    raster: RasterConfig = field(default_factory=RasterConfig)
    adapter: SkeletonAdapter | None = None  # held fixed during fit()

    def __post_init__(self):
        self.free = np.asarray(self.free, dtype=bool)
        if self.free.shape != (N_PARAMS,):
            raise DimensionError(f"free-parameter mask must have {N_PARAMS} entries, got {self.free.shape}")
        if not self.free.any():
            raise InvariantError("free-parameter mask selects nothing")
        if not self.observations.any():
            raise InvariantError("fit problem has no observations")

    def objective(self) -> SceneObjective:
        return SceneObjective(self.template, self.observations, self.weights, self.raster)


@dataclass
class FitResult:
    params: FullParams
    breakdown: obj.LossBreakdown
    trace: list[float]
    iterations: int
    stop_reason: str
    initial_loss: float = float("nan")

    @property
    def loss(self) -> float:
        return self.breakdown.total


def _evaluate(objective: SceneObjective, z, cfg: OptimizerConfig, iteration: int,
              adapter: SkeletonAdapter | None = None) -> tuple[Evaluation, np.ndarray]:
    x = from_internal(z, cfg.translation_scale)
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"parameters became non-finite at iteration {iteration}", iteration=iteration)
    try:
        ev = objective.evaluate(x, adapter=adapter)
    except InvariantError as exc:
        raise DivergenceError(f"illegal parameters at iteration {iteration}: {exc}", iteration=iteration) from exc
    if not np.isfinite(ev.breakdown.total) or not np.all(np.isfinite(ev.grad)):
        raise DivergenceError(f"loss became non-finite at iteration {iteration}", iteration=iteration)
    return ev, x


def fit(problem: FitProblem, config: OptimizerConfig | None = None) -> FitResult:
    """Minimise the weighted total loss over the free parameters.

    The first ``config.view_only_iters`` iterations update only the view
    entries (stage one ends early if it stalls); the rest update every
    free entry. Moments are reset between stages. The best iterate seen
    is returned, so the final loss never exceeds the initial one.

    Raises:
        DivergenceError: the loss or parameters become non-finite; carries
            the offending ``iteration``.
    """
    cfg = (config or OptimizerConfig()).validate()
    objective = problem.objective()
    z = to_internal(pack(problem.init), cfg.translation_scale)
    view_mask = np.zeros(N_PARAMS, dtype=bool)
    view_mask[VIEW_SLICE] = True
    stages = []
    if cfg.view_only_iters > 0 and (problem.free & view_mask).any() and (problem.free & ~view_mask).any():
        stages.append((problem.free & view_mask, cfg.view_only_iters))
    stages.append((problem.free, None))

    trace: list[float] = []
    best_z, best_loss = z.copy(), np.inf
    initial_loss = float("nan")
    stop_reason = "max_iters"
    it = 0
    for stage_index, (mask, budget) in enumerate(stages):
        state = AdamState.init(z[mask])
        stalled = 0
        stage_iters = 0
        prev = None
        while it < cfg.max_iters and (budget is None or stage_iters < budget):
            ev, x = _evaluate(objective, z, cfg, it, problem.adapter)
            loss = ev.breakdown.total
            if it == 0:
                initial_loss = loss
            trace.append(loss)
            if loss < best_loss:
                best_loss, best_z = loss, z.copy()
            if prev is not None:
                improvement = (prev - loss) / max(abs(prev), 1e-12)
                stalled = stalled + 1 if improvement < cfg.tol else 0
            prev = loss
            it += 1
            stage_iters += 1
            if stalled >= cfg.patience:
                break
            g = _internal_grad(ev.grad, x, cfg.translation_scale)
            state = adam_step(state, g[mask], cfg)
            z = z.copy()
            z[mask] = state.params
        is_last = stage_index == len(stages) - 1
        if it >= cfg.max_iters:
            stop_reason = "max_iters"
            break
        if is_last and stalled >= cfg.patience:
            stop_reason = "converged"
        # an exhausted or stalled first stage hands over to the next one

    if not trace:  # zero iteration budget
        ev, _ = _evaluate(objective, z, cfg, 0, problem.adapter)
        initial_loss = best_loss = ev.breakdown.total
        stop_reason = "max_iters"
    best_x = from_internal(best_z, cfg.translation_scale)
    final = objective.evaluate(best_x, need_grad=False, adapter=problem.adapter)
    log.debug("fit stopped after %d iterations (%s), loss %.6g -> %.6g", it, stop_reason, initial_loss,
              final.breakdown.total)
    return FitResult(unpack(best_x), final.breakdown, trace, len(trace), stop_reason, initial_loss)


# ---------------------------------------------------------------------------
# initialisation


def _bbox_diagonal(points) -> float:
    points = np.asarray(points, dtype=np.float64)
    extent = points.max(axis=0) - points.min(axis=0)
    return float(np.hypot(*extent))


def init_heuristic(keypoints_2d, tpl: HandTemplate) -> FullParams:
    """Initial guess from 2D keypoints alone.

    Rest pose, mean shape, no rotation; ``s`` is the ratio of bounding-box
    diagonals (observed over rest keypoints projected at unit scale) and
    ``t`` places the scaled rest keypoints' centroid on the observed one.
    Because ``t`` is where the wrist projects, it is the observed centroid
    minus the scaled rest offset of the centroid from the wrist.

    Raises:
        DegenerateError: all keypoints coincide.
    """
    obs = np.asarray(keypoints_2d, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != 2:
        raise DimensionError(f"2D keypoints must be (n, 2), got {obs.shape}")
    if not np.all(np.isfinite(obs)):
        raise InvariantError("2D keypoints must be finite")
    rest = rest_keypoints(tpl)
    rest2d = (rest - rest[0])[:, :2]
    if obs.shape[0] != rest2d.shape[0]:
        raise DimensionError(f"expected {rest2d.shape[0]} keypoints, got {obs.shape[0]}")
    diag_obs = _bbox_diagonal(obs)
    if diag_obs <= 0:
        raise DegenerateError("all observed keypoints coincide; cannot estimate scale")
    s = diag_obs / _bbox_diagonal(rest2d)
    t = obs.mean(axis=0) - s * rest2d.mean(axis=0)
    return FullParams.rest(ViewParams(t, s, np.zeros(3)))


def init_from_silhouette(mask, tpl: HandTemplate, raster: RasterConfig | None = None) -> FullParams:
    """Initial guess from a binary mask: match bounding-box diagonal and centroid."""
    mask = np.asarray(mask, dtype=np.float64) > 0.5
    raster = raster or RasterConfig(width=mask.shape[1], height=mask.shape[0])
    rows, cols = np.nonzero(mask)
    if rows.size < 2:
        raise DegenerateError("silhouette is empty; cannot initialise")
    obs_pts = np.stack([cols + 0.5, rows + 0.5], axis=1)
    state = hand_forward(np.zeros(10), np.zeros(tpl.k * 3), tpl)
    verts = state.vertices - state.keypoints[0]
    s = (_bbox_diagonal(obs_pts) + 1.0) / _bbox_diagonal(verts[:, :2])
    view = ViewParams(obs_pts.mean(axis=0) - s * verts[:, :2].mean(axis=0), s, np.zeros(3))
    # correct for area weighting: shift so the rendered mask centroid matches
    for _ in range(2):
        sil = rasterize_forward(project_points(verts, view), tpl.faces, raster).pixels
        r2, c2 = np.nonzero(sil > 0.5)
        if r2.size == 0:
            break
        shift = obs_pts.mean(axis=0) - np.array([c2.mean() + 0.5, r2.mean() + 0.5])
        view = ViewParams(view.t + shift, s, np.zeros(3))
    return FullParams.rest(view)


# ---------------------------------------------------------------------------
# skeleton adapter


@dataclass
class AdapterFitResult:
    results: list[FitResult]
    adapter: SkeletonAdapter
    trace: list[float]  # joint objective: start, then after each round


@dataclass(frozen=True)
class AdapterPrior:
    """Ridge strengths pulling the adapter towards the identity.

    Diagonal entries rescale one coordinate and are cheap to move;
    off-diagonal entries and the bias mix or shift coordinates and are
    held much more firmly, so a consistent per-coordinate discrepancy is
    explained by the diagonal rather than spread over correlated joints.
    """

    diagonal: float = 100.0
    off_diagonal: float = 10000.0
    bias: float = 10000.0

    def __post_init__(self):
        if not (self.diagonal > 0 and self.off_diagonal > 0 and self.bias > 0):
            raise InvariantError("adapter prior strengths must be positive")

    def strengths(self, dim: int) -> np.ndarray:
        """(dim, dim + 1) strength per entry of ``[A b]``."""
        lam = np.full((dim, dim + 1), self.off_diagonal)
        lam[np.arange(dim), np.arange(dim)] = self.diagonal
        lam[:, -1] = self.bias
        return lam

    def penalty(self, adapter: SkeletonAdapter) -> float:
        d = adapter.dim
        dev = np.concatenate([adapter.matrix - np.eye(d), adapter.bias[:, None]], axis=1)
        return float(np.sum(self.strengths(d) * dev**2))


def _adapter_update(inputs, targets, weights, prior: AdapterPrior) -> SkeletonAdapter:
    """Weighted ridge regression of ``targets ~ A inputs + b`` towards identity.

    Minimises ``sum_n w_n |A x_n + b - y_n|^2 + sum_ij lam_ij ([A b] - [I 0])_ij^2``
    one output row at a time.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)[:, None]
    d = x.shape[1]
    xa = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    gram = xa.T @ (w * xa)
    rhs = (w * y).T @ xa  # (d, d + 1)
    lam = prior.strengths(d)
    sol = np.empty((d, d + 1))
    for i in range(d):
        target = np.zeros(d + 1)
        target[i] = 1.0
        sol[i] = np.linalg.solve(gram + np.diag(lam[i]), rhs[i] + lam[i] * target)
    return SkeletonAdapter(sol[:, :-1], sol[:, -1])


def _adapter_data(problem: FitProblem, params: FullParams):
    """Model keypoints (root-relative, unrotated) and the 3D targets
    brought into the same frame."""
    st = hand_forward(params.beta, params.theta, problem.template)
    x = (st.keypoints - st.keypoints[0]).reshape(-1)
    # the 3D loss compares rotated keypoints; undo the rotation
    y = (problem.observations.keypoints_3d @ params.view.rotation).reshape(-1)
    return x, y, problem.weights.w3d / st.keypoints.shape[0]


def fit_with_adapter(problems: list[FitProblem], config: OptimizerConfig | None = None,
                     adapter: SkeletonAdapter | None = None, prior: AdapterPrior | None = None, rounds: int = 5,
                     refine: OptimizerConfig | None = None) -> AdapterFitResult:
    """Fit a batch of samples together with one shared skeleton adapter.

    The joint objective is the sum of the per-sample losses plus a ridge
    penalty (:class:`AdapterPrior`) that keeps the adapter at the identity
    unless the 3D data consistently asks otherwise. It is minimised by
    block coordinate descent: every sample is first fitted with the
    starting adapter (``config``); then each of ``rounds`` rounds solves
    for the adapter exactly (a ridge regression) and refines every sample
    with the adapter fixed (``refine``, by default 100 iterations without
    a view-only stage). Both blocks never increase the objective, so the
    returned trace (one value per round, plus the starting value) is
    non-increasing. The adapter touches only the 3D keypoints.
    """
    cfg = (config or OptimizerConfig()).validate()
    refine = refine or OptimizerConfig(lr=cfg.lr, max_iters=100, tol=cfg.tol, patience=cfg.patience,
                                       view_only_iters=0, translation_scale=cfg.translation_scale)
    if not problems:
        raise ValueError("fit_with_adapter needs at least one problem")
    if not any(p.observations.keypoints_3d is not None for p in problems):
        raise InvariantError("skeleton adaptation needs 3D observations for at least one sample")
    prior = prior or AdapterPrior()
    adapter = adapter or SkeletonAdapter.identity(problems[0].template.n_keypoints)

    def solve(step_config, current_params):
        out = []
        for problem, init in zip(problems, current_params):
            out.append(fit(replace(problem, init=init, adapter=adapter), step_config))
        return out

    results = solve(cfg, [p.init for p in problems])
    trace = [sum(r.loss for r in results) + prior.penalty(adapter)]
    for _ in range(rounds):
        data = [_adapter_data(p, r.params) for p, r in zip(problems, results)
                if p.observations.keypoints_3d is not None]
        xs, ys, ws = (np.array(v) for v in zip(*data))
        adapter = _adapter_update(xs, ys, ws, prior)
        results = solve(refine, [r.params for r in results])
        trace.append(sum(r.loss for r in results) + prior.penalty(adapter))
    return AdapterFitResult(results, adapter, trace)


def fit_sample(template: HandTemplate, observations: Observations, weights: obj.LossWeights | None = None,
               config: OptimizerConfig | None = None, raster: RasterConfig | None = None,
               init: FullParams | None = None) -> FitResult:
    """Convenience wrapper: heuristic initialisation then :func:`fit`."""
    raster = raster or RasterConfig()
    if init is None:
        if observations.keypoints_2d is not None:
            init = init_heuristic(observations.keypoints_2d, template)
        elif observations.mask is not None:
            init = init_from_silhouette(observations.mask, template, raster)
        else:
            init = FullParams.rest(ViewParams(np.array([raster.width / 2, raster.height / 2]), 1.0))
    problem = FitProblem(template, observations, init, weights or obj.LossWeights(), raster=raster)
    return fit(problem, config)
