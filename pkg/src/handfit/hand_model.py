"""Parametric hand: blend shapes, pose correctives, kinematic chain and
linear blend skinning, each with a hand-written vector-Jacobian product.

Conventions: ``beta`` has 10 entries, ``theta`` has ``3 K`` entries
(articulation ``a`` drives joint ``a + 1``; the root carries no local
rotation), lengths are millimetres and everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvariantError
from .rotation import rodrigues, rodrigues_vjp
from .template import N_SHAPE, HandTemplate


def _check_beta(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (N_SHAPE,):
        raise DimensionError(f"beta must have {N_SHAPE} entries, got shape {beta.shape}")
    return beta


def _check_theta(theta, tpl: HandTemplate) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (3 * tpl.k,):
        raise DimensionError(f"theta must have {3 * tpl.k} entries, got shape {theta.shape}")
    return theta


def _check_vertices(vertices, tpl: HandTemplate) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape != (tpl.n_vertices, 3):
        raise DimensionError(f"expected ({tpl.n_vertices}, 3) vertices, got {vertices.shape}")
    return vertices


# ---------------------------------------------------------------------------
# blend shapes


def shape_blend(beta, tpl: HandTemplate) -> np.ndarray:
    """Per-vertex offsets ``sum_n beta_n S_n``."""
    beta = _check_beta(beta)
    return np.tensordot(beta, tpl.shape_basis, axes=1)


def shape_blend_backward(grad_offsets, tpl: HandTemplate) -> np.ndarray:
    return np.tensordot(tpl.shape_basis, grad_offsets, axes=([1, 2], [0, 1]))


def pose_features(theta, tpl: HandTemplate) -> np.ndarray:
    """Flattened ``R(theta) - R(theta*)`` coefficients, length 9K."""
    theta = _check_theta(theta, tpl)
    rot = rodrigues(theta.reshape(-1, 3))
    return (rot - np.eye(3)).reshape(-1)


def pose_blend(theta, tpl: HandTemplate) -> np.ndarray:
    """Pose-corrective offsets; zero at the rest pose."""
    return np.tensordot(pose_features(theta, tpl), tpl.pose_basis, axes=1)


def pose_blend_backward(theta, grad_offsets, tpl: HandTemplate) -> np.ndarray:
    theta = _check_theta(theta, tpl)
    g_feat = np.tensordot(tpl.pose_basis, grad_offsets, axes=([1, 2], [0, 1]))
    return rodrigues_vjp(theta.reshape(-1, 3), g_feat.reshape(-1, 3, 3)).reshape(-1)


def posed_template(beta, theta, tpl: HandTemplate) -> np.ndarray:
    return tpl.mean_vertices + shape_blend(beta, tpl) + pose_blend(theta, tpl)


def regress_rest_joints(vertices, tpl: HandTemplate) -> np.ndarray:
    """(K+1, 3) joint locations from mesh vertices via the joint regressor."""
    return tpl.joint_regressor @ _check_vertices(vertices, tpl)


# ---------------------------------------------------------------------------
# kinematic chain


def local_rotations(theta, tpl: HandTemplate) -> np.ndarray:
    """(K+1, 3, 3) per-joint local rotations; the root is the identity."""
    theta = _check_theta(theta, tpl)
    rot = np.empty((tpl.n_joints, 3, 3))
    rot[0] = np.eye(3)
    rot[1:] = rodrigues(theta.reshape(-1, 3))
    return rot


def forward_kinematics(theta, rest_joints, tpl: HandTemplate):
    """World rigid transforms mapping rest-pose space to posed space.

    Joint ``j`` rotates its subtree about its own rest location, composed
    after its parent's transform.

    Returns:
        rotations (K+1, 3, 3) and translations (K+1, 3) such that a rest
        point ``x`` skinned fully to joint ``j`` moves to
        ``rotations[j] @ x + translations[j]``.
    """
    rest_joints = np.asarray(rest_joints, dtype=np.float64)
    if rest_joints.shape != (tpl.n_joints, 3):
        raise DimensionError(f"rest_joints must be ({tpl.n_joints}, 3), got {rest_joints.shape}")
    local = local_rotations(theta, tpl)
    return _chain(local, rest_joints, tpl)


def _chain(local, rest_joints, tpl):
    rot = np.empty_like(local)
    trans = np.empty((tpl.n_joints, 3))
    for j in tpl.topological_order:
        p = tpl.parents[j]
        if p < 0:
            rot[j] = local[j]
            trans[j] = rest_joints[j] - local[j] @ rest_joints[j]
            continue
        rot[j] = rot[p] @ local[j]
        # A_j(x) = A_p(R_j (x - J_j) + J_j)
        trans[j] = rot[p] @ rest_joints[j] + trans[p] - rot[j] @ rest_joints[j]
    return rot, trans


def forward_kinematics_backward(local, rest_joints, rot, grad_rot, grad_trans, tpl: HandTemplate):
    """VJP of :func:`_chain`.

    Returns gradients with respect to the local rotations (K+1, 3, 3) and
    the rest joints (K+1, 3).
    """
    g_rot = np.array(grad_rot, dtype=np.float64, copy=True)
    g_trans = np.array(grad_trans, dtype=np.float64, copy=True)
    g_local = np.zeros_like(local)
    g_joints = np.zeros_like(rest_joints)
    for j in tpl.topological_order[::-1]:
        p = tpl.parents[j]
        J = rest_joints[j]
        gt = g_trans[j]
        if p < 0:
            # trans = J - R J, rot = R
            g_joints[j] += gt - local[j].T @ gt
            g_rot[j] += -np.outer(gt, J)
            g_local[j] += g_rot[j]
            continue
        g_rot[p] += np.outer(gt, J)
        g_trans[p] += gt
        g_joints[j] += rot[p].T @ gt - rot[j].T @ gt
        g_rot[j] += -np.outer(gt, J)
        # rot_j = rot_p @ local_j
        g_rot[p] += g_rot[j] @ local[j].T
        g_local[j] += rot[p].T @ g_rot[j]
    return g_local, g_joints


# ---------------------------------------------------------------------------
# skinning


def skin(posed_vertices, rotations, translations, tpl: HandTemplate) -> np.ndarray:
    """Linear blend skinning ``v_i = sum_k w_ik (R_k t_i + c_k)``."""
    posed_vertices = _check_vertices(posed_vertices, tpl)
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    if rotations.shape != (tpl.n_joints, 3, 3) or translations.shape != (tpl.n_joints, 3):
        raise DimensionError("transforms must be (K+1, 3, 3) rotations and (K+1, 3) translations")
    w = tpl.skinning_weights
    blended = np.einsum("nk,kij->nij", w, rotations)
    return np.einsum("nij,nj->ni", blended, posed_vertices) + w @ translations


def skin_backward(posed_vertices, rotations, grad_vertices, tpl: HandTemplate):
    """Returns gradients for (posed_vertices, rotations, translations)."""
    w = tpl.skinning_weights
    blended = np.einsum("nk,kij->nij", w, rotations)
    g_posed = np.einsum("nij,ni->nj", blended, grad_vertices)
    g_rot = np.einsum("nk,ni,nj->kij", w, grad_vertices, posed_vertices)
    g_trans = w.T @ grad_vertices
    return g_posed, g_rot, g_trans


# ---------------------------------------------------------------------------
# keypoints and skeleton adaptation


def posed_joints(rotations, translations, rest_joints) -> np.ndarray:
    return np.einsum("kij,kj->ki", rotations, rest_joints) + translations


def extract_keypoints(vertices, joints, tpl: HandTemplate) -> np.ndarray:
    """Ordered keypoints: wrist, then per finger base joint ... tip.

    Joint keypoints come from ``joints`` (posed model joints), fingertips
    from mesh ``vertices``. With five three-segment fingers this yields the
    usual 21 points with the middle-finger base joint at index 9.
    """
    kind, index = tpl.keypoint_layout
    out = np.empty((kind.shape[0], 3))
    out[kind == 0] = np.asarray(joints)[index[kind == 0]]
    out[kind == 1] = np.asarray(vertices)[index[kind == 1]]
    return out


def extract_keypoints_backward(grad_keypoints, tpl: HandTemplate):
    """Scatter keypoint gradients back to (vertices, joints)."""
    kind, index = tpl.keypoint_layout
    g_vertices = np.zeros((tpl.n_vertices, 3))
    g_joints = np.zeros((tpl.n_joints, 3))
    np.add.at(g_joints, index[kind == 0], grad_keypoints[kind == 0])
    np.add.at(g_vertices, index[kind == 1], grad_keypoints[kind == 1])
    return g_vertices, g_joints


@dataclass
class SkeletonAdapter:
    """Affine map on the flattened keypoint set, ``x -> matrix @ x + bias``."""

    matrix: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, n_keypoints: int = 21) -> "SkeletonAdapter":
        d = 3 * n_keypoints
        return cls(np.eye(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.bias.shape[0]


def adapt_skeleton(joints, adapter: SkeletonAdapter) -> np.ndarray:
    joints = np.asarray(joints, dtype=np.float64)
    if not (np.all(np.isfinite(adapter.matrix)) and np.all(np.isfinite(adapter.bias))):
        raise InvariantError("skeleton adapter has non-finite entries")
    if adapter.matrix.shape != (joints.size, joints.size) or adapter.bias.shape != (joints.size,):
        raise DimensionError(f"adapter of dimension {adapter.dim} cannot map {joints.shape} joints")
    return (adapter.matrix @ joints.reshape(-1) + adapter.bias).reshape(joints.shape)


def adapt_skeleton_backward(joints, adapter: SkeletonAdapter, grad_out):
    """Returns (grad_joints, grad_matrix, grad_bias)."""
    x = np.asarray(joints, dtype=np.float64).reshape(-1)
    g = np.asarray(grad_out).reshape(-1)
    return (adapter.matrix.T @ g).reshape(np.shape(joints)), np.outer(g, x), g


# ---------------------------------------------------------------------------
# full model


@dataclass
class ModelState:
    """Forward results plus the intermediates the backward pass reuses."""

    beta: np.ndarray
    theta: np.ndarray
    local: np.ndarray
    shaped: np.ndarray
    posed: np.ndarray
    rest_joints: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    vertices: np.ndarray
    joints: np.ndarray
    keypoints: np.ndarray


def hand_forward(beta, theta, tpl: HandTemplate) -> ModelState:
    """Mesh and keypoints for shape ``beta`` and pose ``theta``."""
    beta = _check_beta(beta)
    theta = _check_theta(theta, tpl)
    local = local_rotations(theta, tpl)
    shaped = tpl.mean_vertices + shape_blend(beta, tpl)
    features = (local[1:] - np.eye(3)).reshape(-1)
    posed = shaped + np.tensordot(features, tpl.pose_basis, axes=1)
    rest = tpl.joint_regressor @ shaped
    rot, trans = _chain(local, rest, tpl)
    vertices = skin(posed, rot, trans, tpl)
    joints = posed_joints(rot, trans, rest)
    keypoints = extract_keypoints(vertices, joints, tpl)
    return ModelState(beta, theta, local, shaped, posed, rest, rot, trans, vertices, joints, keypoints)


def hand_backward(state: ModelState, tpl: HandTemplate, grad_vertices=None, grad_keypoints=None):
    """Pull gradients on mesh vertices and/or keypoints back to (beta, theta)."""
    g_vertices = np.zeros((tpl.n_vertices, 3))
    if grad_vertices is not None:
        g_vertices += grad_vertices
    g_joints = np.zeros((tpl.n_joints, 3))
    if grad_keypoints is not None:
        gv, gj = extract_keypoints_backward(np.asarray(grad_keypoints), tpl)
        g_vertices += gv
        g_joints += gj

    # joints = R_k J_k + c_k
    g_rot = np.einsum("ki,kj->kij", g_joints, state.rest_joints)
    g_trans = g_joints.copy()
    g_rest = np.einsum("kij,ki->kj", state.rotations, g_joints)

    g_posed, g_rot_skin, g_trans_skin = skin_backward(state.posed, state.rotations, g_vertices, tpl)
    g_rot += g_rot_skin
    g_trans += g_trans_skin

    g_local, g_rest_fk = forward_kinematics_backward(
        state.local, state.rest_joints, state.rotations, g_rot, g_trans, tpl
    )
    g_rest += g_rest_fk

    # pose correctives feed the local rotations too
    g_feat = np.tensordot(tpl.pose_basis, g_posed, axes=([1, 2], [0, 1])).reshape(-1, 3, 3)
    g_local_art = g_local[1:] + g_feat
    g_theta = rodrigues_vjp(state.theta.reshape(-1, 3), g_local_art).reshape(-1)

    g_shaped = g_posed + tpl.joint_regressor.T @ g_rest
    g_beta = shape_blend_backward(g_shaped, tpl)
    return g_beta, g_theta


def rest_keypoints(tpl: HandTemplate, beta=None) -> np.ndarray:
    beta = np.zeros(N_SHAPE) if beta is None else beta
    return hand_forward(beta, tpl.rest_pose, tpl).keypoints
