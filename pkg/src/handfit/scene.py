"""Composition of hand model, camera, renderer and losses.

The model output is made root-relative (wrist at the origin) before the
global rotation, so the translation ``t`` is exactly where the wrist
lands on screen. 3D keypoints are reported rotated but unscaled, in mm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objectives as obj
from .camera import (
    BETA_SLICE,
    R_SLICE,
    S_INDEX,
    T_SLICE,
    THETA_SLICE,
    FullParams,
    project_points,
    project_points_backward,
    unpack,
)
from .hand_model import (
    SkeletonAdapter,
    adapt_skeleton,
    adapt_skeleton_backward,
    hand_backward,
    hand_forward,
)
from .renderer import RasterConfig, rasterize_forward, vertex_gradients
from .rotation import rodrigues_vjp
from .template import HandTemplate


@dataclass
class Prediction:
    keypoints_3d: np.ndarray  # (J, 3) rotated, root-relative, mm
    keypoints_2d: np.ndarray  # (J, 2) px
    screen_vertices: np.ndarray  # (N, 2) px
    vertices: np.ndarray  # (N, 3) root-relative model frame
    silhouette: np.ndarray | None = None


def predict(params: FullParams, tpl: HandTemplate, raster: RasterConfig | None = None,
            adapter: SkeletonAdapter | None = None) -> Prediction:
    view = params.view.validate()
    state = hand_forward(params.beta, params.theta, tpl)
    root = state.keypoints[0]
    kp = state.keypoints - root
    verts = state.vertices - root
    rot = view.rotation
    kp_final = kp if adapter is None else adapt_skeleton(kp, adapter)
    pred = Prediction(
        keypoints_3d=kp_final @ rot.T,
        keypoints_2d=project_points(kp, view),
        screen_vertices=project_points(verts, view),
        vertices=verts,
    )
    if raster is not None:
        pred.silhouette = rasterize_forward(pred.screen_vertices, tpl.faces, raster).pixels
    return pred


@dataclass
class Observations:
    keypoints_2d: np.ndarray | None = None
    mask: np.ndarray | None = None
    keypoints_3d: np.ndarray | None = None

    def any(self) -> bool:
        return any(x is not None for x in (self.keypoints_2d, self.mask, self.keypoints_3d))


@dataclass
class Evaluation:
    breakdown: obj.LossBreakdown
    grad: np.ndarray | None  # (61,) with respect to the packed parameters
    grad_adapter: tuple[np.ndarray, np.ndarray] | None
    prediction: Prediction


class SceneObjective:
    """Total loss of one sample as a function of its packed parameters.

    Precomputes the target heatmaps once. ``include_mask=False`` drops the
    silhouette-dependent terms (mask loss and BCE), leaving an objective
    whose analytic gradient is exact.
    """

    def __init__(self, tpl: HandTemplate, observations: Observations,
                 weights: obj.LossWeights = obj.LossWeights(),
                 raster: RasterConfig = RasterConfig(), heatmap_sigma: float = obj.HEATMAP_SIGMA,
                 include_mask: bool = True):
        self.tpl = tpl
        self.obs = observations
        self.weights = weights
        self.raster = raster
        self.sigma = heatmap_sigma
        self.include_mask = include_mask and observations.mask is not None
        self.heat_gt = None
        if observations.keypoints_2d is not None and weights.sfe > 0:
            self.heat_gt = obj.gaussian_heatmap(observations.keypoints_2d, heatmap_sigma,
                                                raster.height, raster.width)
        if observations.mask is not None and np.shape(observations.mask) != raster.shape:
            raise ValueError(f"mask shape {np.shape(observations.mask)} does not match raster {raster.shape}")

    def __call__(self, x) -> float:
        return self.evaluate(x, need_grad=False).breakdown.total

    def value_and_grad(self, x):
        ev = self.evaluate(x)
        return ev.breakdown.total, ev.grad

    def evaluate(self, x, need_grad: bool = True, adapter: SkeletonAdapter | None = None) -> Evaluation:
        params = unpack(x)
        tpl, obs, w = self.tpl, self.obs, self.weights
        view = params.view
        state = hand_forward(params.beta, params.theta, tpl)
        root = state.keypoints[0]
        kp = state.keypoints - root
        verts = state.vertices - root
        rot = view.rotation
        kp_adapted = kp if adapter is None else adapt_skeleton(kp, adapter)
        kp3 = kp_adapted @ rot.T
        kp2 = project_points(kp, view)
        screen = project_points(verts, view)
        pred = Prediction(kp3, kp2, screen, verts)

        terms: dict[str, float | None] = {}
        g_kp3 = np.zeros_like(kp3)
        g_kp2 = np.zeros_like(kp2)
        g_screen = None

        if obs.keypoints_3d is not None:
            terms["3d"] = obj.loss_3d(kp3, obs.keypoints_3d)
            if need_grad:
                g_kp3 += w.w3d * obj.loss_3d_grad(kp3, obs.keypoints_3d)
        if obs.keypoints_2d is not None:
            terms["2d"] = obj.loss_2d(kp2, obs.keypoints_2d)
            if need_grad:
                g_kp2 += w.w2d * obj.loss_2d_grad(kp2, obs.keypoints_2d)

        sfe_parts = []
        sil = None
        if self.include_mask:
            sil = rasterize_forward(screen, tpl.faces, self.raster).pixels
            pred.silhouette = sil
            terms["mask"] = obj.loss_mask(sil, obs.mask)
            sfe_parts.append(obj.mask_bce(sil, obs.mask))
            if need_grad:
                upstream = w.mask * obj.loss_mask_grad(sil, obs.mask) + w.sfe * obj.mask_bce_grad(sil, obs.mask)
                if np.any(upstream):
                    g_screen = vertex_gradients(screen, tpl.faces, upstream, self.raster)
        if self.heat_gt is not None:
            heat = obj.gaussian_heatmap(kp2, self.sigma, self.raster.height, self.raster.width)
            sfe_parts.append(obj.heatmap_mse(heat, self.heat_gt))
            if need_grad:
                g_heat = w.sfe * obj.heatmap_mse_grad(heat, self.heat_gt)
                g_kp2 += obj.gaussian_heatmap_backward(kp2, g_heat, self.sigma)
        if sfe_parts:
            terms["sfe"] = obj.sfe_loss([sum(sfe_parts)])
        terms["reg"] = obj.loss_reg(params.beta, params.theta)
        breakdown = obj.total_loss(terms, w)

        if not need_grad:
            return Evaluation(breakdown, None, None, pred)

        grad = np.zeros(61)
        g_adapter = None
        # 3D branch: kp3 = adapt(kp) @ rot.T
        g_kp_adapted = g_kp3 @ rot
        g_rot = g_kp3.T @ kp_adapted
        if adapter is None:
            g_kp = g_kp_adapted
        else:
            g_kp, g_mat, g_bias = adapt_skeleton_backward(kp, adapter, g_kp_adapted)
            g_adapter = (g_mat, g_bias)
        grad[R_SLICE] += rodrigues_vjp(view.r, g_rot)

        g_p, g_t, g_s, g_r = project_points_backward(kp, view, g_kp2)
        g_kp = g_kp + g_p
        grad[T_SLICE] += g_t
        grad[S_INDEX] += g_s
        grad[R_SLICE] += g_r

        g_verts = np.zeros_like(verts)
        if g_screen is not None:
            g_v, g_t, g_s, g_r = project_points_backward(verts, view, g_screen)
            g_verts += g_v
            grad[T_SLICE] += g_t
            grad[S_INDEX] += g_s
            grad[R_SLICE] += g_r

        # undo root centering
        g_keypoints = g_kp.copy()
        g_keypoints[0] -= g_kp.sum(axis=0) + g_verts.sum(axis=0)
        g_beta, g_theta = hand_backward(state, tpl, grad_vertices=g_verts, grad_keypoints=g_keypoints)
        rb, rt = obj.loss_reg_grad(params.beta, params.theta)
        grad[BETA_SLICE] += g_beta + w.reg * rb
        grad[THETA_SLICE] += g_theta + w.reg * rt
        return Evaluation(breakdown, grad, g_adapter, pred)
