"""Dataset shards: raw little-endian tensors plus a JSON manifest.

A shard directory holds::

    manifest.json   schema version, mapping, counts, per-sample keys, file table
    images.f32      (n, 4, H, W) float32  [R, G, B, encoded depth]
    masks.u8        (n, H, W)    uint8    object mask
    grasps.f32      (n, 18)      float32  [p1 p2 p3 n1 n2 n3] in the camera frame
    contacts.f64    (n, 18)      float64  same contacts in the object frame
    props.f64       (n, 13)      float64  work2com (3), work2inertia (9, row-major), mass
    frames.f64      (n, 8, 12)   float64  named frames, row-major [R | t]

Files are header-free; shapes and dtypes live in the manifest. Output bytes
are a pure function of the dataset contents.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .transforms import Transform, compose, decode_frame, encode_frame, invert

SCHEMA_VERSION = 1
FRAME_NAMES = (
    "frame_cam2img_otm",
    "frame_cam2work_otm",
    "frame_cam2work_oto",
    "frame_work2cam_otm",
    "frame_work2cam_oto",
    "frame_world2obj",
    "frame_world2work",
    "frame_work2grip",
)
PROPS_LAYOUT = {"work2com": [0, 3], "work2inertia": [3, 12], "work2mass": [12, 13]}
CAM2IMG_NOTE = ("frame_cam2img_otm: image-plane frame expressed in the camera frame; identity "
                "rotation, origin at the top-left corner of the near plane, i.e. translation "
                "(-near*tan(fov/2), -near*tan(fov/2), near)")

ATTEMPT_NOTE = ("0: the candidate pose itself; 1, 2, 3: the standoffs in order (default 0.06, 0.09, 0.12 m) "
                "back along the palm normal from the proximity hit")

_COLUMNS = {
    # name: (file, dtype, trailing shape builder)
    "images": ("images.f32", "<f4", lambda h, w: (4, h, w)),
    "masks": ("masks.u8", "|u1", lambda h, w: (h, w)),
    "grasps": ("grasps.f32", "<f4", lambda h, w: (18,)),
    "contacts": ("contacts.f64", "<f8", lambda h, w: (18,)),
    "props": ("props.f64", "<f8", lambda h, w: (13,)),
    "frames": ("frames.f64", "<f8", lambda h, w: (len(FRAME_NAMES), 12)),
}


class ShardError(ValueError):
    pass


@dataclass(eq=False)
class Dataset:
    """Column store for one camera mapping; row ``i`` is one successful grasp."""
    mapping: str
    samples: list                      # dicts: object, class, candidate_id, attempt_index, otm_fallback
    images: np.ndarray
    masks: np.ndarray
    grasps: np.ndarray
    contacts: np.ndarray
    props: np.ndarray
    frames: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, mapping: str, height: int = 128, width: int = 128, meta=None) -> "Dataset":
        cols = {k: np.zeros((0,) + shape(height, width), dtype=np.dtype(dt).newbyteorder("="))
                for k, (_, dt, shape) in _COLUMNS.items()}
        return cls(mapping, [], meta=dict(meta or {}), **cols)

    def __len__(self):
        return len(self.samples)

    @property
    def keys(self) -> list:
        return [(s["object"], int(s["candidate_id"]), int(s["attempt_index"])) for s in self.samples]

    @property
    def image_size(self):
        return self.images.shape[2], self.images.shape[3]

    def validate(self):
        n = len(self.samples)
        h, w = self.image_size
        for name, (_, dt, shape) in _COLUMNS.items():
            arr = getattr(self, name)
            if arr.shape != (n,) + shape(h, w):
                raise ShardError(f"column {name!r} has shape {arr.shape}, expected {(n,) + shape(h, w)}")
        if self.mapping not in ("oto", "otm"):
            raise ShardError(f"unknown mapping {self.mapping!r}")

    def subset(self, index) -> "Dataset":
        idx = np.asarray(index, dtype=np.int64).reshape(-1)
        return Dataset(self.mapping, [dict(self.samples[i]) for i in idx],
                       *(getattr(self, k)[idx] for k in _COLUMNS), meta=dict(self.meta))

    def frame(self, i: int, name: str) -> Transform:
        return decode_frame(self.frames[i, FRAME_NAMES.index(name)])

    def object_names(self) -> list:
        return [s["object"] for s in self.samples]


def concat(parts, mapping: str | None = None, meta=None) -> Dataset:
    parts = list(parts)
    if not parts:
        if mapping is None:
            raise ValueError("need a mapping to build an empty dataset")
        return Dataset.empty(mapping, meta=meta)
    mapping = parts[0].mapping if mapping is None else mapping
    for p in parts:
        if p.mapping != mapping:
            raise ShardError(f"cannot merge mapping {p.mapping!r} into {mapping!r}")
    samples = [dict(s) for p in parts for s in p.samples]
    cols = {k: np.concatenate([getattr(p, k) for p in parts]) for k in _COLUMNS}
    return Dataset(mapping, samples, meta=dict(meta if meta is not None else parts[0].meta), **cols)


def sort_by_key(ds: Dataset) -> Dataset:
    keys = ds.keys
    order = sorted(range(len(keys)), key=keys.__getitem__)
    for a, b in zip(order, order[1:]):
        if keys[a] == keys[b]:
            raise ShardError(f"duplicate sample key {keys[a]}")
    return ds.subset(order)


# -- building rows ---------------------------------------------------------------

def object_props(world_to_object: Transform, world_to_table: Transform, mass) -> np.ndarray:
    """work2com, work2inertia (row-major) and mass as a 13-vector."""
    o_in_work = compose(invert(world_to_table), world_to_object)
    com = o_in_work.apply(mass.center_of_mass)
    R = o_in_work.rotation
    inertia = R @ mass.inertia @ R.T
    return np.concatenate([com, inertia.ravel(), [mass.mass]])


def record_row(record, mapping: str, image, mass, cam2img: Transform):
    """Columns for one success record rendered under ``mapping``."""
    named = record.frames()
    named["frame_cam2img_otm"] = cam2img
    frames = np.stack([encode_frame(named[n]) for n in FRAME_NAMES])
    contacts = record.contacts.vector()
    return {
        "images": image.stacked(),
        "masks": image.mask.astype(np.uint8),
        "grasps": record.grasp(mapping).astype(np.float32),
        "contacts": contacts,
        "props": object_props(record.world_to_object, record.world_to_table, mass),
        "frames": frames,
    }


def rows_to_dataset(mapping: str, samples: list, rows: list, height=128, width=128, meta=None) -> Dataset:
    if len(samples) != len(rows):
        raise ShardError(f"{len(samples)} samples but {len(rows)} rows")
    if not rows:
        return Dataset.empty(mapping, height, width, meta)
    cols = {k: np.stack([r[k] for r in rows]).astype(np.dtype(dt).newbyteorder("="))
            for k, (_, dt, _s) in _COLUMNS.items()}
    ds = Dataset(mapping, [dict(s) for s in samples], meta=dict(meta or {}), **cols)
    ds.validate()
    return ds


# -- shard I/O --------------------------------------------------------------------

def _sha256(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def write_shard(ds: Dataset, path, provenance: dict | None = None) -> dict:
    """Write ``ds`` as a shard directory at ``path`` (replacing it atomically)."""
    ds.validate()
    path = Path(path)
    h, w = ds.image_size
    blobs = {}
    files = {}
    for name, (fname, dt, shape) in _COLUMNS.items():
        raw = np.ascontiguousarray(getattr(ds, name), dtype=dt).tobytes()
        blobs[fname] = raw
        files[name] = {"file": fname, "dtype": dt, "shape": [len(ds)] + list(shape(h, w)),
                       "bytes": len(raw), "sha256": _sha256(raw)}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "mapping": ds.mapping,
        "count": len(ds),
        "image_size": [h, w],
        "key_order": ["object", "candidate_id", "attempt_index"],
        "attempt_index": ATTEMPT_NOTE,
        "samples": ds.samples,
        "files": files,
        "frame_names": list(FRAME_NAMES),
        "frame_encoding": "row-major 3x4 [R | t]; append [0, 0, 0, 1] for the homogeneous matrix",
        "frame_cam2img": CAM2IMG_NOTE,
        "props_layout": PROPS_LAYOUT,
        "meta": ds.meta,
        "provenance": provenance or {},
    }
    text = json.dumps(manifest, sort_keys=True, indent=1)
    tmp = path.with_name(path.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    try:
        tmp.mkdir(parents=True)
        for fname, raw in blobs.items():
            (tmp / fname).write_bytes(raw)
        (tmp / "manifest.json").write_text(text)
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def read_manifest(path) -> dict:
    return json.loads((Path(path) / "manifest.json").read_text())


def read_shard(path, verify_hash: bool = False) -> Dataset:
    path = Path(path)
    man = read_manifest(path)
    if man.get("schema_version") != SCHEMA_VERSION:
        raise ShardError(f"{path}: schema version {man.get('schema_version')} != {SCHEMA_VERSION}")
    cols = {}
    for name, (fname, dt, _shape) in _COLUMNS.items():
        info = man["files"][name]
        f = path / info["file"]
        size = f.stat().st_size if f.exists() else -1
        if size != info["bytes"]:
            raise ShardError(f"{f}: truncated or resized ({size} bytes, manifest says {info['bytes']})")
        raw = f.read_bytes()
        if verify_hash and _sha256(raw) != info["sha256"]:
            raise ShardError(f"{f}: checksum mismatch")
        cols[name] = np.frombuffer(raw, dtype=info["dtype"]).reshape(info["shape"]).astype(
            np.dtype(info["dtype"]).newbyteorder("="))
    ds = Dataset(man["mapping"], man["samples"], meta=man.get("meta", {}), **cols)
    ds.validate()
    return ds


def read_merge(paths) -> Dataset:
    """Concatenate shards and order rows by (object, candidate_id, attempt_index)."""
    parts = [read_shard(p) for p in paths]
    if not parts:
        raise ShardError("no shards to merge")
    return sort_by_key(concat(parts))


# -- HDF5 export --------------------------------------------------------------------

def export_hdf5(splits: dict, path) -> None:
    """One file per mapping with ``/{split}/images``, ``grasps`` and ``object_props/*``."""
    import h5py

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with h5py.File(tmp, "w") as fh:
        for split, ds in splits.items():
            g = fh.create_group(split)
            g.create_dataset("images", data=ds.images)
            g.create_dataset("grasps", data=ds.grasps)
            g.create_dataset("masks", data=ds.masks)
            props = g.create_group("object_props")
            props.create_dataset("object_name", data=np.array(ds.object_names(), dtype="S"))
            for name, (a, b) in PROPS_LAYOUT.items():
                props.create_dataset(name, data=ds.props[:, a:b])
            for k, name in enumerate(FRAME_NAMES):
                props.create_dataset(name, data=ds.frames[:, k])
            g.attrs["mapping"] = ds.mapping
    os.replace(tmp, path)
