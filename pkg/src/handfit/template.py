"""Hand template: rest mesh, blend bases, skinning data and kinematic tree.

A template is plain data. :func:`make_toy_template` builds a small
procedural "paddle hand" so that everything can run without licensed
model assets; :func:`load_template` / :func:`save_template` read and
write the JSON interchange format.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateError, InvariantError, SchemaError

N_SHAPE = 10
WEIGHT_TOL = 1e-9

TEMPLATE_KEYS = (
    "n_vertices",
    "n_faces",
    "k",
    "mean_vertices",
    "faces",
    "shape_basis",
    "pose_basis",
    "skinning_weights",
    "joint_regressor",
    "parents",
    "fingertips",
)


@dataclass(frozen=True, eq=False)
class HandTemplate:
    """Everything the hand model needs besides the parameters.

    Attributes:
        mean_vertices: (N, 3) rest mesh in millimetres.
        faces: (M, 3) vertex indices.
        shape_basis: (10, N, 3) offsets per unit shape coefficient.
        pose_basis: (9K, N, 3) offsets per unit rotation-coefficient deviation.
        skinning_weights: (N, K+1) convex per-vertex joint weights.
        joint_regressor: (K+1, N) rows summing to one.
        parents: (K+1,) parent joint index; the root (index 0) has -1.
        fingertips: vertex index of each fingertip, thumb first.
    """

    mean_vertices: np.ndarray
    faces: np.ndarray
    shape_basis: np.ndarray
    pose_basis: np.ndarray
    skinning_weights: np.ndarray
    joint_regressor: np.ndarray
    parents: np.ndarray
    fingertips: np.ndarray
    name: str = field(default="template", compare=False)

    def __post_init__(self):
        coerce = {
            "mean_vertices": np.float64,
            "shape_basis": np.float64,
            "pose_basis": np.float64,
            "skinning_weights": np.float64,
            "joint_regressor": np.float64,
            "faces": np.int64,
            "parents": np.int64,
            "fingertips": np.int64,
        }
        for key, dtype in coerce.items():
            arr = np.array(getattr(self, key), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, key, arr)
        validate_template(self)

    @property
    def n_vertices(self) -> int:
        return self.mean_vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def k(self) -> int:
        """Number of articulations (joints other than the root)."""
        return self.parents.shape[0] - 1

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def rest_pose(self) -> np.ndarray:
        return np.zeros(3 * self.k)

    @cached_property
    def topological_order(self) -> np.ndarray:
        """Joint indices ordered so that every parent precedes its children."""
        return _topological_order(self.parents)

    @cached_property
    def keypoint_layout(self) -> tuple[np.ndarray, np.ndarray]:
        """Sources of the ordered keypoints.

        Returns ``(kind, index)`` arrays: ``kind`` is 0 for a posed model
        joint and 1 for a mesh vertex (fingertip). The order is the wrist,
        then per finger (in fingertip order) base joint to tip.
        """
        kind = [0]
        index = [0]
        for chain, tip in zip(self.finger_chains, self.fingertips):
            kind.extend([0] * len(chain) + [1])
            index.extend(list(chain) + [int(tip)])
        return np.array(kind), np.array(index)

    @cached_property
    def finger_chains(self) -> list[list[int]]:
        """Per fingertip, the joints from the root's child down to the joint
        that carries the fingertip vertex (its heaviest skinning weight)."""
        chains = []
        for tip in self.fingertips:
            leaf = int(np.argmax(self.skinning_weights[tip]))
            chain = []
            j = leaf
            while j > 0:
                chain.append(j)
                j = int(self.parents[j])
            chains.append(chain[::-1])
        return chains

    @property
    def n_keypoints(self) -> int:
        return self.keypoint_layout[0].shape[0]

    def subtree(self, joint: int) -> set[int]:
        """Joint indices in the kinematic subtree rooted at ``joint``."""
        members = {joint}
        for j in self.topological_order:
            if int(self.parents[j]) in members:
                members.add(int(j))
        return members

    def equals(self, other: "HandTemplate") -> bool:
        """Exact array equality on every field of the interchange format."""
        return all(
            np.array_equal(getattr(self, key), getattr(other, key))
            for key in (
                "mean_vertices",
                "faces",
                "shape_basis",
                "pose_basis",
                "skinning_weights",
                "joint_regressor",
                "parents",
                "fingertips",
            )
        )


def _topological_order(parents: np.ndarray) -> np.ndarray:
    n = parents.shape[0]
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    roots = []
    for j, p in enumerate(parents):
        if p < 0:
            roots.append(j)
        else:
            children[int(p)].append(j)
    order = []
    stack = list(reversed(roots))
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != n:
        raise InvariantError("kinematic_parents contains a cycle")
    return np.array(order, dtype=np.int64)


def validate_template(tpl: HandTemplate) -> None:
    """Check shapes and the structural invariants; raise on the first failure."""
    v = tpl.mean_vertices
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
        raise SchemaError(f"mean_vertices must be (N, 3), got {v.shape}")
    n = v.shape[0]
    if tpl.parents.ndim != 1 or tpl.parents.shape[0] < 2:
        raise SchemaError("parents must list at least a root and one articulation")
    k = tpl.parents.shape[0] - 1
    expected = {
        "faces": (None, 3),
        "shape_basis": (N_SHAPE, n, 3),
        "pose_basis": (9 * k, n, 3),
        "skinning_weights": (n, k + 1),
        "joint_regressor": (k + 1, n),
    }
    for key, shape in expected.items():
        arr = getattr(tpl, key)
        if arr.ndim != len(shape) or any(s is not None and s != a for s, a in zip(shape, arr.shape)):
            raise SchemaError(f"{key} has shape {arr.shape}, expected {shape}")
    if tpl.fingertips.ndim != 1:
        raise SchemaError("fingertips must be a flat list of vertex indices")
    for key in ("mean_vertices", "shape_basis", "pose_basis", "skinning_weights", "joint_regressor"):
        if not np.all(np.isfinite(getattr(tpl, key))):
            raise InvariantError(f"{key} contains non-finite values")

    if tpl.faces.size and (tpl.faces.min() < 0 or tpl.faces.max() >= n):
        raise InvariantError("face index out of range")
    if tpl.fingertips.size and (tpl.fingertips.min() < 0 or tpl.fingertips.max() >= n):
        raise InvariantError("fingertip index out of range")

    w = tpl.skinning_weights
    if np.any(w < 0):
        row = int(np.argwhere(w < 0)[0, 0])
        raise InvariantError(f"skinning_weights row {row} has a negative entry")
    bad = np.flatnonzero(np.abs(w.sum(axis=1) - 1.0) > WEIGHT_TOL)
    if bad.size:
        row = int(bad[0])
        raise InvariantError(f"skinning_weights row {row} sums to {w[row].sum():.12g}, not 1")
    bad = np.flatnonzero(np.abs(tpl.joint_regressor.sum(axis=1) - 1.0) > WEIGHT_TOL)
    if bad.size:
        row = int(bad[0])
        raise InvariantError(
            f"joint_regressor row {row} sums to {tpl.joint_regressor[row].sum():.12g}, not 1"
        )

    parents = tpl.parents
    if parents[0] != -1 or np.count_nonzero(parents < 0) != 1:
        raise InvariantError("joint 0 must be the single root (parent -1)")
    if parents.max() > k:
        raise InvariantError("parent index out of range")
    _topological_order(parents)


# ---------------------------------------------------------------------------
# serialization


def template_to_dict(tpl: HandTemplate) -> dict:
    return {
        "n_vertices": tpl.n_vertices,
        "n_faces": tpl.n_faces,
        "k": tpl.k,
        "mean_vertices": tpl.mean_vertices.tolist(),
        "faces": tpl.faces.tolist(),
        "shape_basis": tpl.shape_basis.tolist(),
        "pose_basis": tpl.pose_basis.tolist(),
        "skinning_weights": tpl.skinning_weights.tolist(),
        "joint_regressor": tpl.joint_regressor.tolist(),
        "parents": tpl.parents.tolist(),
        "fingertips": tpl.fingertips.tolist(),
    }


def template_from_dict(doc: dict, name: str = "template") -> HandTemplate:
    if not isinstance(doc, dict):
        raise SchemaError("template document must be a JSON object")
    missing = [key for key in TEMPLATE_KEYS if key not in doc]
    if missing:
        raise SchemaError(f"template is missing keys: {', '.join(missing)}")
    arrays = {}
    for key in TEMPLATE_KEYS[3:]:
        try:
            arrays[key] = np.array(doc[key], dtype=np.int64 if key in ("faces", "parents", "fingertips") else np.float64)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{key} is not a rectangular numeric array: {exc}") from None
    if arrays["faces"].size == 0:
        arrays["faces"] = arrays["faces"].reshape(0, 3)
    for key, value in (("n_vertices", arrays["mean_vertices"].shape[0]),
                       ("n_faces", arrays["faces"].shape[0]),
                       ("k", arrays["parents"].shape[0] - 1)):
        if doc[key] != value:
            raise SchemaError(f"{key} = {doc[key]} disagrees with array sizes ({value})")
    return HandTemplate(
        mean_vertices=arrays["mean_vertices"],
        faces=arrays["faces"],
        shape_basis=arrays["shape_basis"],
        pose_basis=arrays["pose_basis"],
        skinning_weights=arrays["skinning_weights"],
        joint_regressor=arrays["joint_regressor"],
        parents=arrays["parents"],
        fingertips=arrays["fingertips"],
        name=name,
    )


def save_template(tpl: HandTemplate, path) -> None:
    Path(path).write_text(json.dumps(template_to_dict(tpl)), encoding="utf-8")


def load_template(path) -> HandTemplate:
    """Read a template file.

    Raises:
        FileNotFoundError: the file does not exist.
        SchemaError: unparsable JSON or wrong keys/shapes.
        InvariantError: well-formed data that violates a template invariant.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return template_from_dict(doc, name=path.stem)


def mirror_template(tpl: HandTemplate) -> HandTemplate:
    """Left/right flip: negate x of every vertex and basis, reverse face winding."""
    flip = np.array([-1.0, 1.0, 1.0])
    return HandTemplate(
        mean_vertices=tpl.mean_vertices * flip,
        faces=tpl.faces[:, ::-1],
        shape_basis=tpl.shape_basis * flip,
        pose_basis=tpl.pose_basis * flip,
        skinning_weights=tpl.skinning_weights,
        joint_regressor=tpl.joint_regressor,
        parents=tpl.parents,
        fingertips=tpl.fingertips,
        name=tpl.name + "_mirrored",
    )


# ---------------------------------------------------------------------------
# procedural toy hand

RING = 8
PALM_HALF_WIDTH = 40.0
PALM_LENGTH = 90.0
PALM_HALF_DEPTH = 12.0
FINGER_RADIUS = 8.0


def make_toy_template(finger_count: int = 5, segments_per_finger: int = 3, seed: int = 0) -> HandTemplate:
    """Build a deterministic articulated "paddle hand".

    The palm is a box spanning y in [-PALM_LENGTH, 0] with the wrist (root
    joint) at the origin; each finger is a tube of rings pointing towards
    -y. Joint ``1 + f * segments + s`` is segment ``s`` of finger ``f``.
    Shape modes 0-3 are scale, finger length, palm width and finger
    thickness; the remaining ones and the pose basis are smooth seeded
    random fields with local support.
    """
    if finger_count < 1 or segments_per_finger < 1:
        raise DegenerateError("need at least one finger with at least one segment")
    rng = np.random.default_rng(seed)
    F, S = finger_count, segments_per_finger
    k = F * S

    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []
    weights: list[np.ndarray] = []
    # per-vertex tags used to build the bases
    region: list[int] = []  # -1 palm, else finger index
    along: list[float] = []  # distance along the finger axis from its base joint

    def add_vertex(p, w, reg, a):
        verts.append(np.asarray(p, dtype=np.float64))
        weights.append(w)
        region.append(reg)
        along.append(a)
        return len(verts) - 1

    def one_hot(j):
        w = np.zeros(k + 1)
        w[j] = 1.0
        return w

    # palm box: corners plus a bottom ring for the wrist regressor
    hx, hz, L = PALM_HALF_WIDTH, PALM_HALF_DEPTH, PALM_LENGTH
    corners = [(x, y, z) for y in (0.0, -L) for z in (-hz, hz) for x in (-hx, hx)]
    palm_ids = [add_vertex(c, one_hot(0), -1, 0.0) for c in corners]
    box_faces = [
        (0, 1, 3), (0, 3, 2),  # bottom (y = 0)
        (4, 6, 7), (4, 7, 5),  # top (y = -L)
        (0, 4, 5), (0, 5, 1),  # z = -hz
        (2, 3, 7), (2, 7, 6),  # z = +hz
        (0, 2, 6), (0, 6, 4),  # x = -hx
        (1, 5, 7), (1, 7, 3),  # x = +hx
    ]
    faces.extend(tuple(palm_ids[i] for i in f) for f in box_faces)

    bases_x = np.linspace(-hx + FINGER_RADIUS, hx - FINGER_RADIUS, F) if F > 1 else np.zeros(1)
    length_profile = np.array([0.75, 0.95, 1.0, 0.92, 0.7])
    seg_profile = np.array([1.0, 0.68, 0.52, 0.45, 0.4])
    rest_joints = np.zeros((k + 1, 3))
    ring_of_joint: dict[int, list[int]] = {}
    fingertips = []
    angles = 2 * np.pi * np.arange(RING) / RING

    for f in range(F):
        scale = length_profile[f % len(length_profile)] * (1.0 + 0.05 * rng.standard_normal())
        seg_len = 42.0 * scale * np.array([seg_profile[min(s, len(seg_profile) - 1)] for s in range(S)])
        x0 = bases_x[f]
        joint_y = -L - np.concatenate([[0.0], np.cumsum(seg_len)])  # S+1 positions, last is the tip
        first_joint = 1 + f * S

        # rings: (y, weights, distance along finger)
        rings = [(-L + 10.0, one_hot(0), -10.0)]
        for s in range(S):
            j = first_joint + s
            parent = 0 if s == 0 else j - 1
            w = np.zeros(k + 1)
            w[parent] += 0.5
            w[j] += 0.5
            rings.append((joint_y[s], w, -L - joint_y[s] - 0.0))
            rings.append((0.5 * (joint_y[s] + joint_y[s + 1]), one_hot(j), -L - 0.5 * (joint_y[s] + joint_y[s + 1])))
        last = first_joint + S - 1
        rings.append((joint_y[S] + 4.0, one_hot(last), -L - joint_y[S] - 4.0))

        ring_ids = []
        for idx, (y, w, a) in enumerate(rings):
            radius = FINGER_RADIUS * (0.8 if idx == len(rings) - 1 else 1.0)
            ids = [
                add_vertex((x0 + radius * np.cos(t), y, radius * np.sin(t)), w.copy(), f, a)
                for t in angles
            ]
            ring_ids.append(ids)
            if 1 <= idx <= 2 * S - 1 and idx % 2 == 1:
                ring_of_joint[first_joint + (idx - 1) // 2] = ids
        for s in range(S):
            rest_joints[first_joint + s] = (x0, joint_y[s], 0.0)

        for r0, r1 in zip(ring_ids[:-1], ring_ids[1:]):
            for i in range(RING):
                a, b = r0[i], r0[(i + 1) % RING]
                c, d = r1[i], r1[(i + 1) % RING]
                faces.append((a, b, d))
                faces.append((a, d, c))
        base = add_vertex((x0, -L + 10.0, 0.0), one_hot(0), f, -10.0)
        tip = add_vertex((x0, joint_y[S], 0.0), one_hot(last), f, -L - joint_y[S])
        for i in range(RING):
            faces.append((base, ring_ids[0][(i + 1) % RING], ring_ids[0][i]))
            faces.append((tip, ring_ids[-1][i], ring_ids[-1][(i + 1) % RING]))
        fingertips.append(tip)

    V = np.array(verts)
    W = np.array(weights)
    region_arr = np.array(region)
    along_arr = np.array(along)
    n = V.shape[0]

    regressor = np.zeros((k + 1, n))
    # wrist: centroid of the four palm corners at y = 0 (lies on the origin)
    regressor[0, palm_ids[:4]] = 0.25
    for j, ids in ring_of_joint.items():
        regressor[j, ids] = 1.0 / len(ids)

    # shape basis (mm per unit coefficient)
    shape = np.zeros((N_SHAPE, n, 3))
    shape[0] = 0.06 * V  # global scale
    finger = region_arr >= 0
    shape[1, finger, 1] = -0.08 * np.maximum(along_arr[finger], 0.0)  # finger length
    palm_x = np.where(region_arr < 0, V[:, 0], 0.0)
    finger_base_x = np.where(finger, bases_x[np.maximum(region_arr, 0)], 0.0)
    shape[2, :, 0] = 0.06 * (palm_x + finger_base_x)  # palm width, fingers follow
    radial = V.copy()
    radial[:, 1] = 0.0
    radial[finger, 0] -= finger_base_x[finger]
    shape[3] = np.where(finger[:, None], 0.1 * radial, 0.0)  # finger thickness
    for m in range(4, N_SHAPE):
        freq = rng.normal(scale=1.0 / 60.0, size=(3, 3))
        phase = rng.uniform(0, 2 * np.pi, size=3)
        amp = rng.uniform(0.8, 2.0, size=3)
        shape[m] = amp * np.sin(V @ freq + phase)

    # pose basis: each articulation bulges the vertices it skins
    pose = np.zeros((9 * k, n, 3))
    for a in range(k):
        j = a + 1
        support = W[:, j] > 0
        centre = rest_joints[j]
        falloff = np.exp(-np.sum((V[support] - centre) ** 2, axis=1) / (2 * 20.0**2))
        for c in range(9):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            pose[9 * a + c, support] = 1.5 * falloff[:, None] * direction

    parents = np.zeros(k + 1, dtype=np.int64)
    parents[0] = -1
    for f in range(F):
        for s in range(S):
            j = 1 + f * S + s
            parents[j] = 0 if s == 0 else j - 1

    return HandTemplate(
        mean_vertices=V,
        faces=np.array(faces),
        shape_basis=shape,
        pose_basis=pose,
        skinning_weights=W,
        joint_regressor=regressor,
        parents=parents,
        fingertips=np.array(fingertips),
        name=f"toy_{F}x{S}_seed{seed}",
    )
