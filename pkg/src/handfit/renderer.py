"""Binary silhouette rasterizer with surrogate edge-crossing gradients.

Forward: a pixel is lit iff its centre ``(col + 0.5, row + 0.5)`` lies
inside or on the boundary of at least one projected face.

Backward: for each face, vertex, axis and nearby pixel, the vertex
coordinate is swept along the axis to find where a face edge crosses the
pixel centre. The step in pixel value over that distance becomes the
derivative, but only when the step moves the pixel in the direction the
upstream error asks for. Pixels already outside the face use the nearest
crossing; pixels inside use both the leftward and rightward ones.

With union coverage, a pixel changes value when a face starts covering
it only if nothing else covers it, and when a face stops covering it
only if that face was the sole cover.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .camera import ViewParams, project_points, project_points_backward
from .errors import DimensionError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RasterConfig:
    width: int = 64
    height: int = 64
    # pixels searched around each face's bounding box for crossings
    search_margin: int = 1

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("raster dimensions must be positive")
        if self.search_margin < 0:
            raise ValueError("search_margin must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass
class SilhouetteImage:
    pixels: np.ndarray
    skipped_faces: int = 0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.pixels if dtype is None else self.pixels.astype(dtype)


@dataclass
class EdgeCrossing:
    """One sweep of a vertex coordinate that changes a pixel's value.

    ``x1 is None`` means no crossing exists in that direction.
    """

    x0: float
    x1: float | None
    delta_color: float
    delta_pixel: float

    @property
    def delta_x(self) -> float | None:
        return None if self.x1 is None else self.x1 - self.x0


# ---------------------------------------------------------------------------
# scalar gradient rules


def backward_outside(crossing: EdgeCrossing) -> float:
    """Derivative of a pixel outside the face with respect to the vertex
    coordinate: ``dI / dx`` if the change helps, else zero."""
    if crossing.x1 is None:
        return 0.0
    dx = crossing.x1 - crossing.x0
    if dx == 0:
        raise ValueError("crossing distance must be non-zero")
    if crossing.delta_pixel * crossing.delta_color < 0:
        return crossing.delta_color / dx
    return 0.0


def backward_inside(left: EdgeCrossing, right: EdgeCrossing) -> float:
    """Pixel inside the face: the two one-sided sweeps are gated
    independently and summed."""
    return backward_outside(left) + backward_outside(right)


# ---------------------------------------------------------------------------
# forward


def _face_pixel_pairs(tri, cfg: RasterConfig, margin: int):
    """Enumerate (face, pixel) pairs over each face's bounding box."""
    lo = tri.min(axis=1)
    hi = tri.max(axis=1)
    # pixel c has centre c + 0.5, so it lies in [lo, hi] iff ceil(lo - .5) <= c <= floor(hi - .5)
    x0 = np.ceil(lo[:, 0] - 0.5) - margin
    x1 = np.floor(hi[:, 0] - 0.5) + margin
    y0 = np.ceil(lo[:, 1] - 0.5) - margin
    y1 = np.floor(hi[:, 1] - 0.5) + margin
    x0 = np.clip(x0, 0, cfg.width).astype(np.int64)
    y0 = np.clip(y0, 0, cfg.height).astype(np.int64)
    x1 = np.clip(x1, -1, cfg.width - 1).astype(np.int64)
    y1 = np.clip(y1, -1, cfg.height - 1).astype(np.int64)
    nx = np.maximum(x1 - x0 + 1, 0)
    ny = np.maximum(y1 - y0 + 1, 0)
    counts = nx * ny
    total = int(counts.sum())
    face = np.repeat(np.arange(tri.shape[0]), counts)
    start = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total) - start
    nxf = nx[face]
    px = x0[face] + local % np.maximum(nxf, 1)
    py = y0[face] + local // np.maximum(nxf, 1)
    return face, px, py


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _inside(tri, face, cx, cy):
    a, b, c = tri[face, 0], tri[face, 1], tri[face, 2]
    e0 = _edge(a[:, 0], a[:, 1], b[:, 0], b[:, 1], cx, cy)
    e1 = _edge(b[:, 0], b[:, 1], c[:, 0], c[:, 1], cx, cy)
    e2 = _edge(c[:, 0], c[:, 1], a[:, 0], a[:, 1], cx, cy)
    return ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))


def _valid_faces(screen_vertices, faces):
    screen_vertices = np.asarray(screen_vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if screen_vertices.ndim != 2 or screen_vertices.shape[1] != 2:
        raise DimensionError(f"screen vertices must be (n, 2), got {screen_vertices.shape}")
    if faces.size and (faces.min() < 0 or faces.max() >= screen_vertices.shape[0]):
        raise DimensionError("face index out of range")
    tri = screen_vertices[faces]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area2 = _edge(a[:, 0], a[:, 1], b[:, 0], b[:, 1], c[:, 0], c[:, 1])
    keep = np.isfinite(area2) & (area2 != 0)
    return tri, faces, keep


def coverage_count(screen_vertices, faces, cfg: RasterConfig):
    """Number of faces covering each pixel centre, plus the skipped-face count."""
    tri, faces, keep = _valid_faces(screen_vertices, faces)
    tri = tri[keep]
    face, px, py = _face_pixel_pairs(tri, cfg, margin=0)
    inside = _inside(tri, face, px + 0.5, py + 0.5)
    flat = py[inside] * cfg.width + px[inside]
    count = np.bincount(flat, minlength=cfg.height * cfg.width).reshape(cfg.shape)
    return count, int(np.count_nonzero(~keep))


def rasterize_forward(screen_vertices, faces, cfg: RasterConfig = RasterConfig()) -> SilhouetteImage:
    """Binary coverage image (float64 zeros and ones).

    Zero-area faces are skipped; their number is logged and stored on the
    returned image.
    """
    count, skipped = coverage_count(screen_vertices, faces, cfg)
    if skipped:
        log.debug("skipped %d degenerate face(s) during rasterization", skipped)
    return SilhouetteImage((count > 0).astype(np.float64), skipped)


# ---------------------------------------------------------------------------
# backward


def _sweep_interval(au, aw, bu, bw, cu, cw, pu, pw):
    """Range of the moving vertex coordinate ``au`` for which the pixel
    centre lies in the triangle (a, b, c); all other coordinates fixed.

    Returns (lo, hi, ok); ``ok`` is False where no such coordinate exists
    or the pixel sits on the line through the fixed edge.
    """
    sigma = np.sign(_edge(bu, bw, cu, cw, pu, pw))
    # edge (a, b) evaluated at p, linear in au: alpha * au + beta
    alpha1 = bw - pw
    beta1 = bu * (pw - aw) - pu * (bw - aw)
    # edge (c, a) at p
    alpha2 = pw - cw
    beta2 = -cu * (pw - cw) - (aw - cw) * (pu - cu)
    lo = np.full(au.shape, -np.inf)
    hi = np.full(au.shape, np.inf)
    ok = sigma != 0
    for alpha, beta in ((sigma * alpha1, sigma * beta1), (sigma * alpha2, sigma * beta2)):
        pos = alpha > 0
        neg = alpha < 0
        zero = ~(pos | neg)
        with np.errstate(divide="ignore", invalid="ignore"):
            root = -beta / alpha
        lo = np.where(pos, np.maximum(lo, root), lo)
        hi = np.where(neg, np.minimum(hi, root), hi)
        ok &= ~(zero & (beta < 0))
    ok &= lo <= hi
    return lo, hi, ok


def _group_pairs(keys):
    """Index pairs (i, j), i != j, of entries sharing a key."""
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    boundaries = np.flatnonzero(np.diff(sorted_keys)) + 1
    starts = np.concatenate([[0], boundaries])
    sizes = np.diff(np.concatenate([starts, [keys.size]]))
    group = np.repeat(np.arange(starts.size), sizes)
    n = sizes[group]
    i_sorted = np.repeat(np.arange(keys.size), n)
    offset = np.arange(i_sorted.size) - np.repeat(np.cumsum(n) - n, n)
    j_sorted = starts[group][i_sorted] + offset
    keep = i_sorted != j_sorted
    return order[i_sorted[keep]], order[j_sorted[keep]]


def _crossings(tri, face, px, py, count, upstream, faces, width):
    """All candidate crossings as flat arrays (one entry per sweep).

    The colour change at a crossing is evaluated on the union image with
    the vertex moved, so every face sharing the vertex moves with it: a
    covered pixel only turns off if no other face keeps it lit.
    """
    cx = px + 0.5
    cy = py + 0.5
    n_pairs = face.size
    cols = {k: [] for k in ("vertex", "axis", "lo", "hi", "ok", "x0", "idx")}
    for role in range(3):
        a = tri[face, role]
        b = tri[face, (role + 1) % 3]
        c = tri[face, (role + 2) % 3]
        for axis in (0, 1):
            u, w = axis, 1 - axis
            pu, pw = (cx, cy) if axis == 0 else (cy, cx)
            lo, hi, ok = _sweep_interval(a[:, u], a[:, w], b[:, u], b[:, w], c[:, u], c[:, w], pu, pw)
            cols["vertex"].append(faces[face, role])
            cols["axis"].append(np.full(n_pairs, axis))
            cols["lo"].append(lo)
            cols["hi"].append(hi)
            cols["ok"].append(ok)
            cols["x0"].append(a[:, u])
            cols["idx"].append(np.arange(n_pairs))
    vertex, axis, lo, hi, ok, x0, idx = (np.concatenate(cols[k]) for k in ("vertex", "axis", "lo", "hi", "ok", "x0", "idx"))
    pix = py[idx] * width + px[idx]
    inside = ok & (lo <= x0) & (x0 <= hi)

    # faces sharing the moving vertex, seen from the same pixel and axis
    key = (vertex.astype(np.int64) * 2 + axis) * (count.size) + pix
    i, j = _group_pairs(key)
    shared_cover = np.bincount(i, weights=inside[j], minlength=key.size)
    static = count.reshape(-1)[pix] - inside - shared_cover  # faces that do not move
    # does another sharing face still cover just past each end of the interval?
    j_ok = ok[j]
    past_lo = np.bincount(i, weights=j_ok & (lo[j] < lo[i]) & (lo[i] <= hi[j]), minlength=key.size)
    past_hi = np.bincount(i, weights=j_ok & (lo[j] <= hi[i]) & (hi[i] < hi[j]), minlength=key.size)

    dp = upstream.reshape(-1)[pix]
    outside = ok & ~inside
    x1_out = np.where(x0 < lo, lo, hi)
    records = {k: [] for k in ("vertex", "axis", "pixel", "x0", "x1", "delta_x", "delta_color", "delta_pixel", "inside")}
    for sel, x1, dcol, is_inside in (
        (outside, x1_out, np.where(count.reshape(-1)[pix] == 0, 1.0, 0.0), False),
        (inside & np.isfinite(lo), lo, np.where((static <= 0) & (past_lo == 0), -1.0, 0.0), True),
        (inside & np.isfinite(hi), hi, np.where((static <= 0) & (past_hi == 0), -1.0, 0.0), True),
    ):
        dx = x1 - x0
        sel = sel & (dx != 0) & np.isfinite(dx)
        n = int(np.count_nonzero(sel))
        if not n:
            continue
        records["vertex"].append(vertex[sel])
        records["axis"].append(axis[sel])
        records["pixel"].append(np.stack([px[idx[sel]], py[idx[sel]]], axis=1))
        records["x0"].append(x0[sel])
        records["x1"].append(x1[sel])
        records["delta_x"].append(dx[sel])
        records["delta_color"].append(dcol[sel])
        records["delta_pixel"].append(dp[sel])
        records["inside"].append(np.full(n, is_inside))
    out = {}
    for key_name, parts in records.items():
        if parts:
            out[key_name] = np.concatenate(parts)
        else:
            out[key_name] = np.zeros((0, 2) if key_name == "pixel" else 0)
    return out


def vertex_gradients(screen_vertices, faces, upstream, cfg: RasterConfig = RasterConfig(),
                     return_contributions: bool = False):
    """Gradient of the loss with respect to screen vertex positions.

    Args:
        screen_vertices: (N, 2) projected vertices in pixels.
        faces: (M, 3) vertex indices.
        upstream: (H, W) loss gradient with respect to each pixel value.
        cfg: raster configuration.
        return_contributions: also return every candidate crossing with a
            ``flowed`` flag (for instrumentation).

    Returns:
        (N, 2) gradient, and optionally the contribution records.
    """
    screen_vertices = np.asarray(screen_vertices, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cfg.shape:
        raise DimensionError(f"upstream gradient has shape {upstream.shape}, raster is {cfg.shape}")
    grad = np.zeros_like(screen_vertices)
    count, _ = coverage_count(screen_vertices, faces, cfg)
    tri, faces_arr, keep = _valid_faces(screen_vertices, faces)
    tri, faces_arr = tri[keep], faces_arr[keep]
    face, px, py = _face_pixel_pairs(tri, cfg, margin=cfg.search_margin)
    if not return_contributions:
        active = upstream[py, px] != 0
        face, px, py = face[active], px[active], py[active]
    rec = _crossings(tri, face, px, py, count, upstream, faces_arr, cfg.width)
    flowed = rec["delta_pixel"] * rec["delta_color"] < 0
    value = np.where(flowed, rec["delta_color"] / np.where(flowed, rec["delta_x"], 1.0), 0.0)
    contrib = rec["delta_pixel"] * value
    np.add.at(grad, (rec["vertex"].astype(np.int64), rec["axis"].astype(np.int64)), contrib)
    if return_contributions:
        rec["flowed"] = flowed
        rec["derivative"] = value
        rec["contribution"] = contrib
        return grad, rec
    return grad


# ---------------------------------------------------------------------------
# mesh-level wrapper


def render_silhouette(vertices, faces, view: ViewParams, cfg: RasterConfig = RasterConfig()):
    """Project 3D vertices with the weak-perspective view and rasterize.

    Returns:
        (SilhouetteImage, screen_vertices)
    """
    screen = project_points(vertices, view)
    return rasterize_forward(screen, faces, cfg), screen


def render_silhouette_backward(vertices, faces, view: ViewParams, screen, upstream,
                               cfg: RasterConfig = RasterConfig()):
    """Surrogate gradient of a silhouette loss with respect to the 3D
    vertices and the view.

    Returns:
        (grad_vertices, grad_t, grad_s, grad_r)
    """
    g_screen = vertex_gradients(screen, faces, upstream, cfg)
    return project_points_backward(vertices, view, g_screen)
