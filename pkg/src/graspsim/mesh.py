"""Triangle meshes: OBJ I/O, watertightness, mass properties, bounding boxes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12


class ObjParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EmptyMeshError(ValueError):
    pass


class NotWatertightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"
    dropped_faces: int = 0

    def __post_init__(self):
        V = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        F = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(V)):
            raise ValueError("mesh vertices must be finite")
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise ValueError("triangle index out of range")
        V.flags.writeable = False
        F.flags.writeable = False
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", F)

    @property
    def corners(self) -> np.ndarray:
        """``(F, 3, 3)`` triangle corner coordinates."""
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def transformed(self, tf) -> "TriMesh":
        return TriMesh(tf.apply(self.vertices), self.triangles, self.name)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.triangles, self.name)

    def scaled(self, factor: float) -> "TriMesh":
        return TriMesh(self.vertices * float(factor), self.triangles, self.name)

    def flipped(self) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles[:, ::-1], self.name)


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min, dtype=np.float64).reshape(3)
        hi = np.array(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * (self.max - self.min)

    def translated(self, offset) -> "Aabb":
        offset = np.asarray(offset, dtype=np.float64)
        return Aabb(self.min + offset, self.max + offset)


@dataclass(frozen=True)
class MassProperties:
    volume: float
    center_of_mass: np.ndarray
    inertia: np.ndarray
    mass: float = 1.0
    flipped_winding: bool = field(default=False, compare=False)


def parse_obj(text: str, name: str = "mesh", scale: float = 1.0) -> TriMesh:
    """Parse Wavefront OBJ text into a cleaned :class:`TriMesh`.

    Only ``v`` and ``f`` records matter; polygons are fan-triangulated,
    negative (relative) indices are resolved, and triangles with area below
    ``1e-12`` are dropped with a warning.
    """
    verts = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError("vertex record needs 3 coordinates", lineno)
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ObjParseError(f"bad vertex coordinate in {raw.strip()!r}", lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise ObjParseError("face record needs at least 3 vertices", lineno)
            idx = []
            for tok in parts[1:]:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ObjParseError(f"bad face index {tok!r}", lineno) from None
                if i == 0:
                    raise ObjParseError("face index 0 is invalid (OBJ is 1-based)", lineno)
                i = i - 1 if i > 0 else len(verts) + i
                if not 0 <= i < len(verts):
                    raise ObjParseError(f"face index {tok!r} refers to a missing vertex", lineno)
                idx.append(i)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
    if not faces:
        raise EmptyMeshError(f"OBJ {name!r} contains no faces")
    V = np.array(verts, dtype=np.float64) * float(scale)
    F = np.array(faces, dtype=np.int64)
    c = V[F]
    area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    keep = area >= DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d degenerate triangle(s)", name, dropped)
    if not keep.any():
        raise EmptyMeshError(f"OBJ {name!r} has only degenerate faces")
    return TriMesh(V, F[keep], name=name, dropped_faces=dropped)


def load_obj(path, scale: float = 1.0) -> TriMesh:
    path = Path(path)
    return parse_obj(path.read_text(), name=path.stem, scale=scale)


def write_obj(mesh: TriMesh) -> str:
    lines = [f"# {mesh.name}"]
    lines += ["v {!r} {!r} {!r}".format(*map(float, v)) for v in mesh.vertices]
    lines += ["f {} {} {}".format(*(int(i) + 1 for i in f)) for f in mesh.triangles]
    return "\n".join(lines) + "\n"


def is_watertight(mesh: TriMesh) -> bool:
    """True iff every edge is shared by exactly two triangles with opposite winding."""
    F = mesh.triangles
    if len(F) == 0:
        return False
    edges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    if np.any(edges[:, 0] == edges[:, 1]):
        return False
    n = np.int64(len(mesh.vertices))
    keys = edges[:, 0] * n + edges[:, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    if np.any(counts != 1):
        return False
    reverse = edges[:, 1] * n + edges[:, 0]
    return bool(np.all(np.isin(reverse, uniq, assume_unique=False)))


def bounding_box(mesh: TriMesh) -> Aabb:
    if len(mesh.vertices) == 0:
        raise EmptyMeshError("bounding box of an empty mesh")
    return Aabb(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


def _raw_moments(mesh: TriMesh, ref):
    c = mesh.corners - ref
    # Each triangle with ``ref`` forms a signed tetrahedron. Sums are
    # accumulated unscaled and divided once, so dyadic vertex coordinates
    # integrate without rounding.
    det = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2]))
    s = c.sum(axis=1)
    volume = det.sum() / 6.0
    first = (det[:, None] * s).sum(axis=0) / 24.0
    second = np.einsum("n,nki,nkj->ij", det, c, c) + np.einsum("n,ni,nj->ij", det, s, s)
    return volume, first, second / 120.0


def mass_properties(mesh: TriMesh, mass: float = 1.0) -> MassProperties:
    """Volume, centre of mass and inertia (about the COM) of a closed mesh.

    Uses signed-tetrahedron integration about the bounding-box centre. The inertia is
    scaled to a uniform-density body of total ``mass`` and expressed in the
    mesh's own axes. A negative volume is treated as inverted winding: the
    triangles are flipped and the integration retried once.
    """
    if not is_watertight(mesh):
        raise NotWatertightError(f"mesh {mesh.name!r} is not watertight")
    if mass <= 0:
        raise ValueError("mass must be positive")
    flipped = False
    # integrate about the box centre to avoid cancellation far from the origin
    ref = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))
    volume, first, cov = _raw_moments(mesh, ref)
    if volume < 0:
        flipped = True
        volume, first, cov = _raw_moments(mesh.flipped(), ref)
    if volume <= 0:
        raise ValueError(f"mesh {mesh.name!r} encloses no volume")
    com = first / volume
    cov_com = cov - volume * np.outer(com, com)
    com = com + ref
    density = mass / volume
    cov_com = density * cov_com
    # diagonal as sums of the other two second moments rather than trace minus
    d = np.diag(cov_com)
    inertia = -cov_com
    np.fill_diagonal(inertia, [d[1] + d[2], d[0] + d[2], d[0] + d[1]])
    inertia = 0.5 * (inertia + inertia.T)
    return MassProperties(float(volume), com, inertia, float(mass), flipped)


# -- primitive builders -------------------------------------------------------

def box_mesh(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), name: str = "box") -> TriMesh:
    """Axis-aligned cuboid with outward-facing triangles."""
    h = 0.5 * np.asarray(size, dtype=np.float64)
    signs = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    V = signs * h + np.asarray(center, dtype=np.float64)
    # vertex index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    F = []
    for a, b, c, d in quads:
        F += [(a, b, c), (a, c, d)]
    return TriMesh(V, F, name=name)


def cylinder_mesh(radius: float, height: float, segments: int = 32, name: str = "cylinder") -> TriMesh:
    """Closed cylinder along Z, centred at the origin."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    V = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    F = []
    for i in range(segments):
        j = (i + 1) % segments
        F += [(i, j, segments + j), (i, segments + j, segments + i)]
        F.append((cb, j, i))
        F.append((ct, segments + i, segments + j))
    return TriMesh(V, F, name=name)


def wedge_mesh(size=(0.08, 0.06, 0.05), name: str = "wedge") -> TriMesh:
    """Right triangular prism: a ramp rising along +X, extruded along Y."""
    lx, ly, lz = size
    V = np.array([
        [-lx / 2, -ly / 2, -lz / 2], [lx / 2, -ly / 2, -lz / 2], [lx / 2, -ly / 2, lz / 2],
        [-lx / 2, ly / 2, -lz / 2], [lx / 2, ly / 2, -lz / 2], [lx / 2, ly / 2, lz / 2],
    ])
    F = [
        (0, 1, 2), (3, 5, 4),            # end caps
        (0, 3, 4), (0, 4, 1),            # bottom
        (1, 4, 5), (1, 5, 2),            # vertical back face
        (0, 2, 5), (0, 5, 3),            # ramp
    ]
    return TriMesh(V, F, name=name)


def icosphere(radius: float = 1.0, subdivisions: int = 2, name: str = "icosphere") -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(np.array(V) * radius, faces, name=name)
