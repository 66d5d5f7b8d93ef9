"""Weak perspective camera and the 61-entry parameter vector.

Screen convention: x to the right, y down, origin at the image's top-left
corner, units in pixels. A point ``p`` (mm) maps to ``s * (R p)[:2] + t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvariantError
from .rotation import rodrigues, rodrigues_vjp

N_PARAMS = 61
# layout of the packed vector
T_SLICE = slice(0, 2)
S_INDEX = 2
R_SLICE = slice(3, 6)
THETA_SLICE = slice(6, 51)
BETA_SLICE = slice(51, 61)
VIEW_SLICE = slice(0, 6)


@dataclass
class ViewParams:
    t: np.ndarray = field(default_factory=lambda: np.zeros(2))
    s: float = 1.0
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64).reshape(2)
        self.r = np.asarray(self.r, dtype=np.float64).reshape(3)
        self.s = float(self.s)

    def validate(self) -> "ViewParams":
        if not (np.isfinite(self.s) and np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.r))):
            raise InvariantError("view parameters must be finite")
        if self.s <= 0:
            raise InvariantError(f"scale s must be positive, got {self.s}")
        return self

    @property
    def rotation(self) -> np.ndarray:
        return rodrigues(self.r)


@dataclass
class FullParams:
    view: ViewParams
    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)

    @classmethod
    def rest(cls, view: ViewParams | None = None) -> "FullParams":
        return cls(view or ViewParams(), np.zeros(45), np.zeros(10))

    def copy(self) -> "FullParams":
        return unpack(pack(self))


def pack(params: FullParams) -> np.ndarray:
    """Flatten to ``(t, s, r, theta, beta)``; 2 + 1 + 3 + 45 + 10 = 61 values."""
    v = params.view
    out = np.concatenate([v.t, [v.s], v.r, params.theta, params.beta])
    if out.shape != (N_PARAMS,):
        raise DimensionError(f"parameters pack to {out.shape[0]} values, expected {N_PARAMS}")
    return out


def unpack(vector) -> FullParams:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (N_PARAMS,):
        raise DimensionError(f"expected {N_PARAMS} parameters, got shape {vector.shape}")
    view = ViewParams(vector[T_SLICE].copy(), vector[S_INDEX], vector[R_SLICE].copy()).validate()
    return FullParams(view, vector[THETA_SLICE].copy(), vector[BETA_SLICE].copy())


def project_points(points, view: ViewParams) -> np.ndarray:
    """``s * drop_z(R p) + t`` for every row of ``points``."""
    view.validate()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionError(f"points must be (n, 3), got {points.shape}")
    return view.s * (points @ view.rotation.T)[:, :2] + view.t


def project_points_backward(points, view: ViewParams, grad_2d):
    """VJP of :func:`project_points`.

    Returns:
        (grad_points, grad_t, grad_s, grad_r)
    """
    points = np.asarray(points, dtype=np.float64)
    grad_2d = np.asarray(grad_2d, dtype=np.float64)
    rot = view.rotation
    rotated = points @ rot.T
    g_t = grad_2d.sum(axis=0)
    g_s = float(np.sum(grad_2d * rotated[:, :2]))
    g_rotated = np.zeros_like(points)
    g_rotated[:, :2] = view.s * grad_2d
    g_points = g_rotated @ rot
    g_rot = g_rotated.T @ points
    g_r = rodrigues_vjp(view.r, g_rot)
    return g_points, g_t, g_s, g_r


def project_joints(joints, view: ViewParams) -> np.ndarray:
    """Weak-perspective re-projection of a keypoint set."""
    return project_points(joints, view)


def project_vertices(vertices, view: ViewParams) -> np.ndarray:
    """Screen-space positions of mesh vertices (same map as the joints)."""
    return project_points(vertices, view)


def rotate_points(points, view: ViewParams) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ view.rotation.T


def view_from_vector(vector) -> ViewParams:
    vector = np.asarray(vector, dtype=np.float64)
    return ViewParams(vector[T_SLICE], vector[S_INDEX], vector[R_SLICE])
