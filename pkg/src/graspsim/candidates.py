"""Grasp candidates from global (pre-multiplied) and local (post-multiplied) rotations.

Every candidate is ``Q = R_global @ base @ R_local`` where ``base`` is the
initial object-to-gripper pose and both rotations are Euler XYZ products.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .raycast import ray_aabb
from .scene import ObjectPose, SceneConfig
from .transforms import Transform, euler_xyz_batch

DEFAULT_CAP = 10_000


@dataclass(frozen=True)
class AxisRange:
    min: float
    max: float
    inc: float

    def __post_init__(self):
        if self.inc <= 0:
            raise ValueError("rotation increment must be positive")
        if not self.min < self.max:
            raise ValueError("rotation range needs min < max")

    def values(self) -> np.ndarray:
        """Half-open sampling ``[min, max)`` in degrees."""
        n = int(np.ceil((self.max - self.min) / self.inc - 1e-9))
        return self.min + self.inc * np.arange(n)


@dataclass(frozen=True)
class RotationGrid:
    """Per-axis sampling ranges in degrees; defaults are the standard grid."""
    global_x: AxisRange = AxisRange(0, 180, 30)
    global_y: AxisRange = AxisRange(0, 360, 30)
    global_z: AxisRange = AxisRange(0, 360, 45)
    local_x: AxisRange = AxisRange(0, 180, 20)
    local_y: AxisRange = AxisRange(0, 360, 20)
    local_z: AxisRange = AxisRange(0, 360, 45)

    @classmethod
    def from_dict(cls, d: dict) -> "RotationGrid":
        kwargs = {}
        for key, val in d.items():
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown rotation grid field {key!r}")
            if isinstance(val, dict):
                kwargs[key] = AxisRange(**val)
            else:
                kwargs[key] = AxisRange(*val)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def global_triples(self) -> np.ndarray:
        return _product(self.global_x, self.global_y, self.global_z)

    def local_triples(self) -> np.ndarray:
        return _product(self.local_x, self.local_y, self.local_z)


def _product(ax, ay, az) -> np.ndarray:
    gx, gy, gz = np.meshgrid(ax.values(), ay.values(), az.values(), indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def enumerate_grid(grid: RotationGrid):
    """All ``(global, local)`` angle triples in lexicographic order.

    Returns ``(global_angles, local_angles)``, each ``(N, 3)`` in degrees, where
    the flat triple index is ``i_global * n_local + i_local``.
    """
    g = grid.global_triples()
    loc = grid.local_triples()
    return np.repeat(g, len(loc), axis=0), np.tile(loc, (len(g), 1))


def candidate_pose(base: Transform, global_deg, local_deg) -> Transform:
    Rg = euler_xyz_batch(np.radians(global_deg))[0]
    Rl = euler_xyz_batch(np.radians(local_deg))[0]
    return Transform(Rg @ base.rotation @ Rl, Rg @ base.translation)


def ray_box_intersect(origin, direction, box):
    """Forward-ray slab test. Returns ``(hit, t_entry)``."""
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("ray direction must be non-zero")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"ray direction must be unit length (|d| = {norm!r})")
    hit, t = ray_aabb(np.asarray(origin, dtype=np.float64)[None], d[None], box.min, box.max)
    return bool(hit[0]), float(t[0])


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    object_to_gripper: Transform
    global_angles: np.ndarray
    local_angles: np.ndarray
    candidate_id: int


@dataclass(eq=False)
class CandidateDb:
    object_name: str
    base: Transform
    grid: RotationGrid
    seed: int
    cap: int
    candidate_ids: np.ndarray                  # (N,) int64 flat triple index
    rotations: np.ndarray                      # (N, 3, 3)
    translations: np.ndarray                   # (N, 3)
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.candidate_ids)

    def __getitem__(self, i) -> GraspCandidate:
        cid = int(self.candidate_ids[i])
        n_local = len(self.grid.local_triples())
        g = self.grid.global_triples()[cid // n_local]
        loc = self.grid.local_triples()[cid % n_local]
        return GraspCandidate(Transform(self.rotations[i], self.translations[i]), g, loc, cid)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def derive_seed(seed: int, *parts) -> int:
    """Stable 63-bit seed from a base seed and any string-able key parts."""
    h = hashlib.sha256(repr((int(seed),) + tuple(str(p) for p in parts)).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def build_candidate_db(pose: ObjectPose, base: Transform, grid: RotationGrid = RotationGrid(),
                       scene: SceneConfig = SceneConfig(), cap: int = DEFAULT_CAP, seed: int = 0,
                       object_name: str = "object") -> CandidateDb:
    """Enumerate, filter and cap candidates for one object.

    A candidate survives if its gripper origin is not beneath the table and
    its palm-normal ray hits the object's bounding box. Survivors are put in
    a seeded random order (a uniform subsample when more than ``cap`` exist).
    """
    g_ang = grid.global_triples()
    l_ang = grid.local_triples()
    Rg = euler_xyz_batch(np.radians(g_ang))
    Rl = euler_xyz_batch(np.radians(l_ang))
    RgB = Rg @ base.rotation                        # (G, 3, 3)
    trans = Rg @ base.translation                   # (G, 3), depends on the global part only
    local_z = Rl[:, :, 2]                           # palm normal of R_local in gripper-parent axes
    n_g, n_l = len(Rg), len(Rl)

    w2o = pose.world_to_object
    world_z = (trans @ w2o.rotation.T + w2o.translation)[:, 2]
    above = world_z >= scene.table_height

    keep = np.zeros((n_g, n_l), dtype=bool)
    box = pose.object_aabb_in_O
    for gi in np.nonzero(above)[0]:
        dirs = local_z @ RgB[gi].T                   # (L, 3)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        hit, _ = ray_aabb(np.broadcast_to(trans[gi], dirs.shape), dirs, box.min, box.max)
        keep[gi] = hit
    flat = np.nonzero(keep.ravel())[0]
    rng = np.random.default_rng(derive_seed(seed, object_name, "candidates"))
    order = rng.permutation(len(flat))
    chosen = np.sort(flat)[order[:cap]]

    gi, li = np.divmod(chosen, n_l)
    rotations = RgB[gi] @ Rl[li]
    stats = {
        "enumerated": int(n_g * n_l),
        "below_table": int((~above).sum()) * n_l,
        "ray_miss": int(above.sum()) * n_l - int(len(flat)),
        "survivors": int(len(flat)),
        "retained": int(len(chosen)),
        "empty": bool(len(chosen) == 0),
    }
    return CandidateDb(object_name, base, grid, int(seed), int(cap), chosen.astype(np.int64),
                       rotations, trans[gi], stats)


# -- persistence ---------------------------------------------------------------

_MAGIC = b"GSCDB001"


def save_candidate_db(db: CandidateDb, path) -> None:
    """Binary shard: magic, u64 header length, JSON header, raw little-endian arrays."""
    header = {
        "object_name": db.object_name,
        "grid": db.grid.to_dict(),
        "seed": db.seed,
        "cap": db.cap,
        "count": len(db),
        "base": np.hstack([db.base.rotation, db.base.translation[:, None]]).ravel().tolist(),
        "stats": db.stats,
        "layout": {"candidate_ids": "<i8 (N,)", "poses": "<f8 (N, 12) row-major [R | t]"},
    }
    raw = json.dumps(header, sort_keys=True).encode()
    poses = np.concatenate([db.rotations, db.translations[:, :, None]], axis=2).reshape(-1, 12)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(db.candidate_ids.astype("<i8").tobytes())
        fh.write(poses.astype("<f8").tobytes())
    tmp.replace(path)


def load_candidate_db(path) -> CandidateDb:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a candidate database")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen])
    n = header["count"]
    off = 16 + hlen
    expected = off + n * 8 + n * 12 * 8
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    ids = np.frombuffer(data, "<i8", n, off).astype(np.int64)
    poses = np.frombuffer(data, "<f8", n * 12, off + n * 8).reshape(n, 3, 4).astype(np.float64)
    base = np.array(header["base"]).reshape(3, 4)
    grid = RotationGrid.from_dict(header["grid"])
    return CandidateDb(header["object_name"], Transform(base[:, :3], base[:, 3]), grid,
                       header["seed"], header["cap"], ids, poses[:, :, :3].copy(),
                       poses[:, :, 3].copy(), header.get("stats", {}))
