"""Analytic part-based shape backend.

Shapes are unions of rigid primitives (box, cylinder, ellipsoid) with a yaw
about the vertical (+y) axis. Each part has an exact, invertible 16-entry
latent encoding, so ground-truth latents exist for every generated shape and
the decoder stays an oracle rather than a trained network.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .errors import EmptyShapeError

KINDS = ("box", "cylinder", "ellipsoid")

# evaluation domain for field sampling and meshing
DOMAIN_MIN = -1.25
DOMAIN_MAX = 1.25

ENCODING_WIDTH = 16
HALF_EXTENT_RANGE = (0.02, 1.2)
CENTER_RANGE = (-1.1, 1.1)


@dataclass(frozen=True)
class PartPrimitive:
    """One rigid part. Units are shape-normalized: the whole shape fits [-1,1]^3.

    For cylinders the radius is half_extents[0] and the half-height is
    half_extents[1]; half_extents[2] rides along in the encoding but does not
    affect geometry (generators keep it equal to the radius).
    """

    kind: str
    center: tuple
    half_extents: tuple
    yaw: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_extents, dtype=np.float64)
        if c.shape != (3,) or h.shape != (3,):
            raise ValueError("center and half_extents must be 3-vectors")
        if not np.all(h > 0):
            raise ValueError("half_extents must be positive")
        if (
            np.any(h < HALF_EXTENT_RANGE[0])
            or np.any(h > HALF_EXTENT_RANGE[1])
            or np.any(np.abs(c) > CENTER_RANGE[1])
        ):
            raise ValueError("primitive exceeds the representable parameter range")
        if np.any(np.abs(c) + h > 1.25 + 1e-12):
            raise ValueError("primitive exceeds the [-1.25, 1.25]^3 domain")
        if not -math.pi <= self.yaw < math.pi:
            raise ValueError("yaw must lie in [-pi, pi)")
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        object.__setattr__(self, "half_extents", tuple(float(v) for v in h))
        object.__setattr__(self, "yaw", float(self.yaw))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center": list(self.center),
            "half_extents": list(self.half_extents),
            "yaw": self.yaw,
        }

    @staticmethod
    def from_dict(d: dict) -> "PartPrimitive":
        return PartPrimitive(d["kind"], tuple(d["center"]), tuple(d["half_extents"]), d["yaw"])


@dataclass
class PartSet:
    """Per-slot latent matrix plus presence flags for one shape."""

    m: int
    d_model: int
    z: np.ndarray  # (m, d_model)
    c: np.ndarray  # (m,) in {0,1} for targets, [0,1] for predictions

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.z.shape != (self.m, self.d_model):
            raise ValueError(f"z must be ({self.m}, {self.d_model}), got {self.z.shape}")
        if self.c.shape != (self.m,):
            raise ValueError(f"c must be ({self.m},), got {self.c.shape}")
        if np.any(self.c < 0) or np.any(self.c > 1):
            raise ValueError("presence flags must lie in [0, 1]")

    def copy(self) -> "PartSet":
        return PartSet(self.m, self.d_model, self.z.copy(), self.c.copy())


@dataclass
class LabeledMesh:
    """Triangle mesh with a part index per face."""

    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray  # (t, 3) int
    face_part: np.ndarray  # (t,) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.face_part = np.asarray(self.face_part, dtype=np.int64).reshape(-1)
        if len(self.face_part) != len(self.faces):
            raise ValueError("face_part length must match faces")
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    @staticmethod
    def empty() -> "LabeledMesh":
        return LabeledMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                           np.zeros(0, dtype=np.int64))

    def to_json_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "faces": self.faces.tolist(),
            "face_part": self.face_part.tolist(),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "LabeledMesh":
        return LabeledMesh(np.array(d["vertices"]), np.array(d["faces"]), np.array(d["face_part"]))


# -- latent encoding --------------------------------------------------------------
#
# Row layout (first 16 entries, rest zero-padded to d_model):
#   [0:3]   one-hot kind
#   [3:6]   center
#   [6:9]   half extents
#   [9]     cos(yaw)
#   [10]    sin(yaw)
#   [11]    occupancy tag, always 1.0 for a real part
#   [12:16] reserved zeros


def encode_part(p: PartPrimitive, d_model: int) -> np.ndarray:
    if d_model < ENCODING_WIDTH:
        raise ValueError(f"d_model must be >= {ENCODING_WIDTH}, got {d_model}")
    row = np.zeros(d_model, dtype=np.float64)
    row[KINDS.index(p.kind)] = 1.0
    row[3:6] = p.center
    row[6:9] = p.half_extents
    row[9] = math.cos(p.yaw)
    row[10] = math.sin(p.yaw)
    row[11] = 1.0
    return row


def decode_part(zrow: np.ndarray) -> PartPrimitive:
    """Total inverse of encode_part: clamps out-of-range values, never raises
    on in-range floats. Non-finite input is a hard error."""
    zrow = np.asarray(zrow, dtype=np.float64)
    if zrow.ndim != 1 or zrow.size < ENCODING_WIDTH:
        raise ValueError(f"latent row must have at least {ENCODING_WIDTH} entries")
    if not np.all(np.isfinite(zrow[:ENCODING_WIDTH])):
        raise FloatingPointError("latent row contains non-finite entries")
    kind = KINDS[int(np.argmax(zrow[:3]))]  # np.argmax ties to lowest index
    center = np.clip(zrow[3:6], *CENTER_RANGE)
    half = np.clip(zrow[6:9], *HALF_EXTENT_RANGE)
    # keep the part inside the domain even if the raw row strays
    half = np.minimum(half, 1.25 - np.abs(center))
    half = np.maximum(half, HALF_EXTENT_RANGE[0])
    center = np.clip(center, -(1.25 - half), 1.25 - half)
    yaw = math.atan2(zrow[10], zrow[9])
    if yaw >= math.pi:  # atan2 returns (-pi, pi]; fold the pi endpoint
        yaw = -math.pi
    return PartPrimitive(kind, tuple(center), tuple(half), yaw)


def encode_parts(parts: list, slots: list, m: int, d_model: int) -> PartSet:
    """Ground-truth PartSet with each part written into its slot row."""
    if len(parts) != len(slots):
        raise ValueError("parts and slots must align")
    if len(set(slots)) != len(slots):
        raise ValueError("slots must be distinct")
    z = np.zeros((m, d_model), dtype=np.float64)
    c = np.zeros(m, dtype=np.float64)
    for part, slot in zip(parts, slots):
        if not 0 <= slot < m:
            raise ValueError(f"slot {slot} out of range for m={m}")
        z[slot] = encode_part(part, d_model)
        c[slot] = 1.0
    return PartSet(m, d_model, z, c)


def decode_partset(ps: PartSet, threshold: float = 0.5) -> tuple[list, list]:
    """Decode rows whose presence is >= threshold. Returns (parts, slot indices)."""
    parts, slots = [], []
    for i in range(ps.m):
        if ps.c[i] >= threshold:
            parts.append(decode_part(ps.z[i]))
            slots.append(i)
    return parts, slots


# -- signed distance ---------------------------------------------------------------


def _to_local(p: PartPrimitive, q: np.ndarray) -> np.ndarray:
    """World points (n,3) -> part-local frame (undo translation, then yaw)."""
    d = q - np.asarray(p.center)
    cy, sy = math.cos(p.yaw), math.sin(p.yaw)
    # inverse rotation about +y
    x = cy * d[:, 0] - sy * d[:, 2]
    z = sy * d[:, 0] + cy * d[:, 2]
    return np.stack([x, d[:, 1], z], axis=1)


def _sdf_one(p: PartPrimitive, q: np.ndarray) -> np.ndarray:
    """Signed distance of one primitive at points (n,3) -> (n,).

    Box and cylinder are exact. The ellipsoid uses the scaled-sphere bound
    (|q/r| - 1) * min(r): same zero set as the true surface, 1-Lipschitz, and
    a lower bound on true distance, so sphere tracing over it is safe.
    """
    local = _to_local(p, q)
    h = np.asarray(p.half_extents)
    if p.kind == "box":
        d = np.abs(local) - h
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(d.max(axis=1), 0.0)
        return outside + inside
    if p.kind == "cylinder":
        radial = np.hypot(local[:, 0], local[:, 2]) - h[0]
        axial = np.abs(local[:, 1]) - h[1]
        w = np.stack([radial, axial], axis=1)
        outside = np.linalg.norm(np.maximum(w, 0.0), axis=1)
        inside = np.minimum(w.max(axis=1), 0.0)
        return outside + inside
    # ellipsoid
    k = np.linalg.norm(local / h, axis=1)
    return (k - 1.0) * h.min()


def sdf_values(parts: list, q: np.ndarray) -> np.ndarray:
    """Per-part signed distances: points (n,3) -> matrix (n, len(parts))."""
    if not parts:
        raise EmptyShapeError("need at least one part")
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    return np.stack([_sdf_one(p, q) for p in parts], axis=1)


def sdf(parts: list, q) -> "float | np.ndarray":
    """Union signed distance (min over parts) at one point (3,) or many (n,3)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    vals = sdf_values(parts, q).min(axis=1)
    return float(vals[0]) if single else vals


def part_responsibility(parts: list, q) -> "int | np.ndarray":
    """Index of the closest part (argmin of signed distance, ties to lowest index)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    idx = np.argmin(sdf_values(parts, q), axis=1)
    return int(idx[0]) if single else idx


def circumradius(parts: list) -> float:
    """Radius of a sphere at the origin guaranteed to contain every part."""
    r = 0.0
    for p in parts:
        r = max(r, float(np.linalg.norm(p.center) + np.linalg.norm(p.half_extents)))
    return r


# -- meshing -----------------------------------------------------------------------


def extract_mesh(parts: list, grid_res: int, iso: float = 0.0) -> LabeledMesh:
    """March the union field on a grid_res^3 cell grid over [-1.25, 1.25]^3.

    Returns an empty mesh when the field never crosses iso. Face part labels
    come from part_responsibility at face centroids.
    """
    if not parts:
        raise EmptyShapeError("need at least one part")
    if grid_res < 8:
        raise ValueError("grid_res must be >= 8")
    n = grid_res + 1
    axis = np.linspace(DOMAIN_MIN, DOMAIN_MAX, n)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    field = sdf(parts, pts).reshape(n, n, n)
    # nudge exact zeros inside so no vertex lands on a grid corner
    field[field == iso] = iso - 1e-12
    if field.min() > iso or field.max() < iso:
        return LabeledMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))
    spacing = (DOMAIN_MAX - DOMAIN_MIN) / grid_res
    verts, faces, _, _ = measure.marching_cubes(
        field, level=iso, spacing=(spacing, spacing, spacing), allow_degenerate=False
    )
    verts = verts + DOMAIN_MIN
    centroids = verts[faces].mean(axis=1)
    labels = part_responsibility(parts, centroids)
    return LabeledMesh(verts, faces, labels)


def sample_surface(mesh: LabeledMesh, n: int, seed: int) -> np.ndarray:
    """Area-weighted uniform surface samples, deterministic for a given seed."""
    if mesh.is_empty:
        raise EmptyShapeError("cannot sample an empty mesh")
    if n < 1:
        raise ValueError("n must be >= 1")
    tri = mesh.vertices[mesh.faces]  # (t, 3, 3)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise EmptyShapeError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a, b, c = tri[idx, 0], tri[idx, 1], tri[idx, 2]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


# -- mesh export -------------------------------------------------------------------


def mesh_to_obj(mesh: LabeledMesh) -> str:
    """Wavefront text form with faces grouped by part (group name part_<i>)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for part in sorted(set(mesh.face_part.tolist())):
        lines.append(f"g part_{part}")
        for f in mesh.faces[mesh.face_part == part]:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return "\n".join(lines) + "\n"


def mesh_from_obj(text: str) -> LabeledMesh:
    """Inverse of mesh_to_obj. Faces outside any part_<i> group get label 0;
    per-corner attribute suffixes (a/b/c forms) are tolerated and ignored."""
    verts, faces, labels = [], [], []
    part = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields or fields[0] in ("#", "o", "s", "vn", "vt", "usemtl", "mtllib"):
            continue
        tag, rest = fields[0], fields[1:]
        if tag == "v":
            if len(rest) < 3:
                raise ValueError(f"obj line {lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in rest[:3]])
        elif tag == "g":
            name = rest[0] if rest else ""
            part = int(name.split("_", 1)[1]) if name.startswith("part_") else 0
        elif tag == "f":
            if len(rest) != 3:
                raise ValueError(f"obj line {lineno}: only triangles are supported")
            faces.append([int(tok.split("/")[0]) - 1 for tok in rest])
            labels.append(part)
        else:
            raise ValueError(f"obj line {lineno}: unsupported record {tag!r}")
    return LabeledMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3),
                       np.array(labels, dtype=np.int64))


def mesh_to_json(mesh: LabeledMesh) -> str:
    return json.dumps(mesh.to_json_dict())


def mesh_from_json(text: str) -> LabeledMesh:
    return LabeledMesh.from_json_dict(json.loads(text))


def load_mesh(path: str) -> LabeledMesh:
    """Read .obj or .json mesh files."""
    with open(path) as f:
        text = f.read()
    if str(path).endswith(".json"):
        return mesh_from_json(text)
    if str(path).endswith(".obj"):
        return mesh_from_obj(text)
    raise ValueError(f"unknown mesh format: {path}")
