"""Stage driver: preprocess, candidates, simulate, postprocess, split, export.

Every stage writes ``<out>/<stage>/stage.json`` holding a hash of its inputs;
a re-run with matching inputs is a no-op. Simulation is split into job
shards (object, candidate range) whose results are written atomically, so an
interrupted run resumes by skipping finished jobs. Final outputs depend only
on the corpus bytes, the config and the seed, never on the worker count.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datastore as store
from .candidates import build_candidate_db, load_candidate_db, save_candidate_db
from .config import PipelineConfig
from .grasping import OUTCOMES, PreparedObject, evaluate_candidate, prepare_object
from .mesh import (EmptyMeshError, NotWatertightError, ObjParseError, box_mesh, cylinder_mesh,
                   load_obj, wedge_mesh, write_obj)
from .postprocess import clean, split_dataset
from .render import Camera, MeshBody, render, table_body
from .scene import PlacementError

log = logging.getLogger(__name__)

STAGES = ("preprocess", "candidates", "simulate", "postprocess", "split", "export")
SPLITS = ("train", "validation", "test")


class StageError(RuntimeError):
    pass


# -- small helpers --------------------------------------------------------------

def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, sort_keys=True, indent=1))
    os.replace(tmp, path)


def _read_json(path: Path):
    return json.loads(Path(path).read_text())


def _stage_done(out: Path, stage: str, input_hash: str):
    f = out / stage / "stage.json"
    if f.exists():
        info = _read_json(f)
        if info.get("input_hash") == input_hash:
            return info
    return None


def _finish_stage(out: Path, stage: str, input_hash: str, counts: dict) -> dict:
    info = {"stage": stage, "input_hash": input_hash, "counts": counts}
    _write_json(out / stage / "stage.json", info)
    return info


def _stage_hash(out: Path, stage: str) -> str:
    f = out / stage / "stage.json"
    if not f.exists():
        raise StageError(f"stage {stage!r} has not been run in {out}")
    return _read_json(f)["input_hash"]


# -- corpus ------------------------------------------------------------------------

def write_toy_corpus(root) -> list:
    """Cube, cylinder and wedge OBJ files, one class directory each."""
    root = Path(root)
    meshes = [("box", box_mesh((0.1, 0.1, 0.1), name="cube")),
              ("cylinder", cylinder_mesh(0.035, 0.14, 32, name="cylinder")),
              ("wedge", wedge_mesh((0.1, 0.08, 0.1), name="wedge"))]
    paths = []
    for cls, mesh in meshes:
        p = root / cls / f"{mesh.name}.obj"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(write_obj(mesh))
        paths.append(p)
    return paths


def scan_corpus(corpus) -> list:
    """``(name, class, path)`` for every OBJ under ``corpus``, sorted by path.

    The class is the file's parent directory name, or the object name for
    files at the corpus root.
    """
    root = Path(corpus)
    if not root.is_dir():
        raise StageError(f"corpus directory {root} does not exist")
    entries = []
    seen = {}
    for p in sorted(root.rglob("*.obj")):
        name = p.stem
        if name in seen:
            raise StageError(f"duplicate object name {name!r}: {seen[name]} and {p}")
        seen[name] = p
        cls = p.parent.name if p.parent != root else name
        entries.append((name, cls, p))
    return entries


def load_prepared(cfg: PipelineConfig, entry: dict) -> PreparedObject:
    """Rebuild a prepared object from its preprocess entry, checking the file hash."""
    raw = Path(entry["path"]).read_bytes()
    if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
        raise StageError(f"{entry['path']} changed since preprocessing")
    mesh = load_obj(entry["path"], scale=cfg.mesh_scale)
    return prepare_object(mesh, cfg.scene, cfg.object_mass, entry["class"])


# -- stages --------------------------------------------------------------------------

def stage_preprocess(cfg: PipelineConfig, out: Path) -> dict:
    entries = scan_corpus(cfg.corpus)
    files = [(n, c, hashlib.sha256(p.read_bytes()).hexdigest()) for n, c, p in entries]
    h = _hash({"files": files, "config": cfg.fingerprint("scene", "object_mass", "mesh_scale")})
    done = _stage_done(out, "preprocess", h)
    if done:
        return done
    objects, quarantined = [], []
    for (name, cls, path), (_, _, sha) in zip(entries, files):
        try:
            mesh = load_obj(path, scale=cfg.mesh_scale)
            obj = prepare_object(mesh, cfg.scene, cfg.object_mass, cls)
        except (ObjParseError, EmptyMeshError, NotWatertightError, PlacementError, ValueError) as exc:
            log.warning("quarantined %s: %s", path, exc)
            quarantined.append({"name": name, "path": str(path), "reason": str(exc)})
            continue
        mp = obj.mass
        objects.append({
            "name": name, "class": cls, "path": str(path), "sha256": sha,
            "vertices": int(len(mesh.vertices)), "triangles": int(len(mesh.triangles)),
            "dropped_faces": int(mesh.dropped_faces),
            "volume": mp.volume, "center_of_mass": mp.center_of_mass.tolist(),
            "inertia": mp.inertia.tolist(), "mass": mp.mass,
            "flipped_winding": bool(mp.flipped_winding),
            "world_to_object_translation": obj.pose.world_to_object.translation.tolist(),
            "center_offset": np.asarray(obj.pose.center_offset).tolist(),
            "aabb_half_extents": obj.pose.object_aabb_in_O.half_extents.tolist(),
        })
    _write_json(out / "preprocess" / "objects.json", {"objects": objects, "quarantined": quarantined})
    return _finish_stage(out, "preprocess", h, {"objects": len(objects), "quarantined": len(quarantined)})


def _objects(out: Path) -> list:
    return _read_json(out / "preprocess" / "objects.json")["objects"]


def stage_candidates(cfg: PipelineConfig, out: Path) -> dict:
    h = _hash({"up": _stage_hash(out, "preprocess"),
               "config": cfg.fingerprint("grid", "scene", "cap", "seed")})
    done = _stage_done(out, "candidates", h)
    if done:
        return done
    d = out / "candidates"
    stats = {}
    for entry in _objects(out):
        obj = load_prepared(cfg, entry)
        db = build_candidate_db(obj.pose, obj.base, cfg.grid, cfg.scene, cfg.cap, cfg.seed, obj.name)
        d.mkdir(parents=True, exist_ok=True)
        save_candidate_db(db, d / f"{obj.name}.cdb")
        stats[obj.name] = db.stats
    return _finish_stage(out, "candidates", h, {"objects": stats})


@dataclass(frozen=True)
class JobShard:
    object_name: str
    start: int
    stop: int
    worker: int

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def dirname(self) -> str:
        return f"{self.object_name}__{self.start:06d}_{self.stop:06d}"


def plan_jobs(sizes, workers: int) -> list:
    """Partition per-object candidate counts into ``workers`` balanced chunks.

    ``sizes`` is a sequence of ``(object_name, count)``. The concatenated
    candidate list is cut into ``workers`` runs whose lengths differ by at
    most one; runs spanning several objects become one shard per object.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    sizes = [(str(n), int(c)) for n, c in sizes]
    total = sum(c for _, c in sizes)
    bounds = [0]
    for w in range(workers):
        bounds.append(bounds[-1] + total // workers + (1 if w < total % workers else 0))
    offsets = np.cumsum([0] + [c for _, c in sizes])
    shards = []
    for w in range(workers):
        lo, hi = bounds[w], bounds[w + 1]
        for k, (name, _) in enumerate(sizes):
            a, b = max(lo, offsets[k]), min(hi, offsets[k + 1])
            if a < b:
                shards.append(JobShard(name, int(a - offsets[k]), int(b - offsets[k]), w))
    return shards


def _render_rows(cfg: PipelineConfig, obj: PreparedObject, records: list) -> dict:
    cam_cfg = cfg.camera
    env = (table_body(cfg.scene.table_height, cfg.scene.table_extent),)
    body = MeshBody(obj.mesh_world)
    out = {m: [] for m in cfg.mappings}
    cam2img = None
    for rec in records:
        for m in cfg.mappings:
            cam = Camera(rec.world_to_camera[m], cam_cfg.fov_deg, cam_cfg.near, cam_cfg.far,
                         cam_cfg.resolution, cam_cfg.resolution)
            cam2img = cam.image_frame()
            img = render(cam, (body,), env)
            out[m].append(store.record_row(rec, m, img, obj.mass, cam2img))
    return out


def run_job(cfg_dict: dict, entry: dict, db_path: str, job: JobShard, job_dir: str) -> dict:
    """Simulate one job shard and write its results atomically to ``job_dir``."""
    cfg = PipelineConfig.from_dict(cfg_dict)
    obj = load_prepared(cfg, entry)
    db = load_candidate_db(db_path)
    attempts, records = [], []
    for i in range(job.start, job.stop):
        for a in evaluate_candidate(db[i], obj, cfg.scene, cfg.hand, cfg.sim):
            attempts.append([obj.name, a.candidate_id, a.attempt_index, a.outcome, a.detail])
            if a.record is not None:
                records.append(a.record)
    rows = _render_rows(cfg, obj, records)
    samples = [{"object": r.object_name, "class": obj.class_name, "candidate_id": r.candidate_id,
                "attempt_index": r.attempt_index, "otm_fallback": bool(r.otm_fallback)}
               for r in records]
    final = Path(job_dir)
    tmp = final.with_name(final.name + ".tmp")
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    res = cfg.camera.resolution
    for m in cfg.mappings:
        ds = store.rows_to_dataset(m, samples, rows[m], res, res)
        store.write_shard(ds, tmp / m)
    summary = {"object": obj.name, "start": job.start, "stop": job.stop,
               "evaluated": job.size, "attempts": attempts, "successes": len(records)}
    _write_json(tmp / "job.json", summary)
    shutil.rmtree(final, ignore_errors=True)
    os.replace(tmp, final)
    return summary


# Indirection so tests can interrupt the stage after a number of jobs.
_run_job = run_job


def stage_simulate(cfg: PipelineConfig, out: Path) -> dict:
    h = _hash({"up": _stage_hash(out, "candidates"),
               "config": cfg.fingerprint("hand", "sim", "scene", "camera", "batch_size", "mappings")})
    done = _stage_done(out, "simulate", h)
    if done:
        return done
    objects = _objects(out)
    cand_stats = _read_json(out / "candidates" / "stage.json")["counts"]["objects"]
    sizes = [(e["name"], min(cfg.batch_size, cand_stats[e["name"]]["retained"])) for e in objects]
    jobs = plan_jobs(sizes, cfg.workers)
    by_name = {e["name"]: e for e in objects}
    jobs_dir = out / "simulate" / "jobs"
    jobs_dir.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    todo = [j for j in jobs if not (jobs_dir / j.dirname / "job.json").exists()]
    args = [(cfg_dict, by_name[j.object_name], str(out / "candidates" / f"{j.object_name}.cdb"), j,
             str(jobs_dir / j.dirname)) for j in todo]
    if cfg.workers == 1 or len(args) <= 1:
        for a in args:
            _run_job(*a)
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for fut in [pool.submit(run_job, *a) for a in args]:
                fut.result()

    # Merge in key order; the job layout does not influence the result.
    wanted = {j.dirname for j in jobs}
    attempts, evaluated = [], {}
    for j in sorted(jobs, key=lambda j: (j.object_name, j.start)):
        info = _read_json(jobs_dir / j.dirname / "job.json")
        attempts.extend(info["attempts"])
        evaluated[j.object_name] = evaluated.get(j.object_name, 0) + info["evaluated"]
    attempts.sort(key=lambda a: (a[0], a[1], a[2]))
    for m in cfg.mappings:
        ds = store.read_merge([jobs_dir / d / m for d in sorted(wanted)])
        ds.meta = {"stage": "simulate"}
        store.write_shard(ds, out / "simulate" / m, {"config": cfg.fingerprint()})
    _write_json(out / "simulate" / "attempts.json", attempts)
    outcomes = {o: 0 for o in OUTCOMES}
    per_object = {}
    for name, cid, idx, outcome, _ in attempts:
        outcomes[outcome] += 1
        per_object.setdefault(name, {o: 0 for o in OUTCOMES})[outcome] += 1
    counts = {
        "evaluated": evaluated,
        "skipped": {n: cand_stats[n]["retained"] - evaluated.get(n, 0) for n in by_name},
        "attempts": len(attempts),
        "outcomes": outcomes,
        "outcomes_per_object": per_object,
        "candidates_with_attempts": len({(a[0], a[1]) for a in attempts}),
    }
    return _finish_stage(out, "simulate", h, counts)


def stage_postprocess(cfg: PipelineConfig, out: Path) -> dict:
    h = _hash({"up": _stage_hash(out, "simulate"), "config": cfg.fingerprint("filters", "camera", "scene")})
    done = _stage_done(out, "postprocess", h)
    if done:
        return done
    f, cam = cfg.filters, cfg.camera
    counts = {}
    for m in cfg.mappings:
        ds = store.read_shard(out / "simulate" / m)
        kept, reports = clean(ds, f.variance_threshold, f.bisect_epsilon, f.sigma_k,
                              cfg.scene.table_height, f.review_margin, cam.near, cam.far)
        kept.meta = {"stage": "postprocess"}
        store.write_shard(kept, out / "postprocess" / m, {"config": cfg.fingerprint()})
        _write_json(out / "postprocess" / f"{m}_report.json", [r.to_dict() for r in reports])
        counts[m] = {"input": len(ds), "retained": len(kept),
                     "removed": {r.stage: r.removed for r in reports}}
    return _finish_stage(out, "postprocess", h, counts)


def stage_split(cfg: PipelineConfig, out: Path) -> dict:
    h = _hash({"up": _stage_hash(out, "postprocess"), "config": cfg.fingerprint("split", "seed")})
    done = _stage_done(out, "split", h)
    if done:
        return done
    counts = {}
    for m in cfg.mappings:
        ds = store.read_shard(out / "postprocess" / m)
        parts, report = split_dataset(ds, cfg.split.validation_fraction, cfg.seed)
        for name, part in parts.items():
            part.meta = {"stage": "split", "split": name}
            store.write_shard(part, out / "split" / m / name, {"config": cfg.fingerprint()})
        _write_json(out / "split" / f"{m}_report.json", report)
        counts[m] = report["sizes"]
    return _finish_stage(out, "split", h, counts)


def stage_export(cfg: PipelineConfig, out: Path) -> dict:
    h = _hash({"up": _stage_hash(out, "split")})
    done = _stage_done(out, "export", h)
    if done:
        return done
    try:
        import h5py  # noqa: F401
    except ImportError as exc:
        raise StageError("export needs h5py; install the 'export' extra") from exc
    files = {}
    for m in cfg.mappings:
        parts = {s: store.read_shard(out / "split" / m / s) for s in SPLITS}
        path = out / "export" / f"dataset_{m}.h5"
        path.parent.mkdir(parents=True, exist_ok=True)
        store.export_hdf5(parts, path)
        files[m] = path.name
    return _finish_stage(out, "export", h, {"files": files})


STAGE_FUNCS = {
    "preprocess": stage_preprocess,
    "candidates": stage_candidates,
    "simulate": stage_simulate,
    "postprocess": stage_postprocess,
    "split": stage_split,
    "export": stage_export,
}


def summarize(out: Path) -> dict:
    """Per-stage counts of every completed stage, with reconciliation checks."""
    out = Path(out)
    summary = {}
    for s in STAGES:
        f = out / s / "stage.json"
        if f.exists():
            summary[s] = _read_json(f)["counts"]
    checks = {}
    if "candidates" in summary and "simulate" in summary:
        retained = {n: st["retained"] for n, st in summary["candidates"]["objects"].items()}
        sim = summary["simulate"]
        checks["candidates_reconcile"] = all(
            retained[n] == sim["evaluated"].get(n, 0) + sim["skipped"][n] for n in retained)
        checks["attempts_reconcile"] = sim["attempts"] == sum(sim["outcomes"].values())
    if "postprocess" in summary and "split" in summary:
        checks["split_reconcile"] = all(
            summary["postprocess"][m]["retained"] == sum(summary["split"][m].values())
            for m in summary["split"])
    summary["checks"] = checks
    return summary


def run_pipeline(cfg: PipelineConfig, out, stages=None) -> dict:
    """Run ``stages`` (default: all, with export only when h5py is present)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if stages is None:
        stages = list(STAGES)
        try:
            import h5py  # noqa: F401
        except ImportError:
            log.warning("h5py not installed; skipping export")
            stages.remove("export")
    for s in stages:
        if s not in STAGE_FUNCS:
            raise StageError(f"unknown stage {s!r}")
        log.info("stage %s", s)
        STAGE_FUNCS[s](cfg, out)
    summary = summarize(out)
    _write_json(out / "summary.json", summary)
    return summary
