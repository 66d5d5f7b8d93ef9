"""Axis-angle <-> rotation matrix (Rodrigues) with analytic derivatives.

All functions broadcast over leading axes: ``r`` may be ``(3,)`` or
``(..., 3)``.
"""
from __future__ import annotations

import numpy as np

# below this angle the closed-form coefficients are replaced by their series
SMALL_ANGLE = 1e-8
# derivative coefficients lose precision much earlier than sin(t)/t does
SMALL_ANGLE_DERIV = 1e-2


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix ``[v]_x`` so that ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _coefficients(angle: np.ndarray):
    """Return A = sin t / t and B = (1 - cos t) / t**2."""
    a = np.empty_like(angle)
    b = np.empty_like(angle)
    small = angle < SMALL_ANGLE
    t2 = angle[small] ** 2
    a[small] = 1.0 - t2 / 6.0
    b[small] = 0.5 - t2 / 24.0
    t = angle[~small]
    a[~small] = np.sin(t) / t
    # 2 sin^2(t/2) avoids the cancellation in 1 - cos t
    b[~small] = 2.0 * np.sin(0.5 * t) ** 2 / t**2
    return a, b


def _derivative_coefficients(angle: np.ndarray):
    """Return C = A'(t) / t and D = B'(t) / t."""
    c = np.empty_like(angle)
    d = np.empty_like(angle)
    small = angle < SMALL_ANGLE_DERIV
    t2 = angle[small] ** 2
    c[small] = -1.0 / 3.0 + t2 * (1.0 / 30.0 + t2 * (-1.0 / 840.0 + t2 / 45360.0))
    d[small] = -1.0 / 12.0 + t2 * (1.0 / 180.0 + t2 * (-1.0 / 6720.0 + t2 / 453600.0))
    t = angle[~small]
    s, co = np.sin(t), np.cos(t)
    c[~small] = (t * co - s) / t**3
    d[~small] = (t * s - 2.0 * (1.0 - co)) / t**4
    return c, d


def rodrigues(r: np.ndarray) -> np.ndarray:
    """Rotation matrix for axis-angle vector(s) ``r``.

    >>> np.allclose(rodrigues(np.array([0.0, 0.0, np.pi / 2])) @ [1, 0, 0], [0, 1, 0])
    True
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 3:
        raise ValueError(f"axis-angle vectors need a trailing axis of 3, got {r.shape}")
    angle = np.linalg.norm(r, axis=-1)
    a, b = _coefficients(np.atleast_1d(angle))
    a = a.reshape(angle.shape)[..., None, None]
    b = b.reshape(angle.shape)[..., None, None]
    k = skew(r)
    return np.eye(3) + a * k + b * (k @ k)


def rodrigues_jacobian(r: np.ndarray) -> np.ndarray:
    """Derivative of ``rodrigues(r)``; shape ``(..., 3, 3, 3)`` with the
    parameter index last."""
    r = np.asarray(r, dtype=np.float64)
    angle = np.linalg.norm(r, axis=-1)
    flat = np.atleast_1d(angle)
    a, b = _coefficients(flat)
    c, d = _derivative_coefficients(flat)
    shape = angle.shape + (1, 1)
    a, b, c, d = (x.reshape(shape) for x in (a, b, c, d))
    k = skew(r)
    k2 = k @ k
    basis = skew(np.eye(3))  # [e_i]_x for i = 0..2
    out = np.empty(r.shape[:-1] + (3, 3, 3))
    for i in range(3):
        e = basis[i]
        out[..., i] = (
            a * e
            + b * (e @ k + k @ e)
            + c * r[..., i, None, None] * k
            + d * r[..., i, None, None] * k2
        )
    return out


def rodrigues_vjp(r: np.ndarray, grad_matrix: np.ndarray) -> np.ndarray:
    """Pull a gradient on the rotation matrix back to the axis-angle vector."""
    jac = rodrigues_jacobian(r)
    return np.einsum("...ij,...ijk->...k", grad_matrix, jac)
