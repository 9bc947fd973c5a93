import json

import numpy as np
import pytest

import graspsim.pipeline as pipeline
from graspsim import cli
from graspsim.config import PipelineConfig
from graspsim.datastore import read_shard
from graspsim.pipeline import (JobShard, StageError, plan_jobs, run_pipeline, scan_corpus,
                               write_toy_corpus)
from conftest import tree_bytes

SMALL_GRID = {"global_x": [0, 180, 60], "global_y": [0, 360, 90], "global_z": [0, 360, 90],
              "local_x": [0, 180, 60], "local_y": [0, 360, 90], "local_z": [0, 360, 90]}


def small_config(corpus, **kw):
    d = {"corpus": str(corpus), "grid": SMALL_GRID, "cap": 60, "batch_size": 24,
         "camera": {"resolution": 16}}
    d.update(kw)
    return PipelineConfig.from_dict(d)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_toy_corpus(root)
    return root


# -- job planning ---------------------------------------------------------------

def test_plan_two_objects_four_workers():
    jobs = plan_jobs([("a", 100), ("b", 100)], 4)
    assert [j.size for j in jobs] == [50, 50, 50, 50]
    assert [(j.object_name, j.start, j.stop) for j in jobs] == \
        [("a", 0, 50), ("a", 50, 100), ("b", 0, 50), ("b", 50, 100)]


def test_plan_seven_over_two():
    assert [j.size for j in plan_jobs([("a", 7)], 2)] == [4, 3]


def test_plan_zero_workers_rejected():
    with pytest.raises(ValueError):
        plan_jobs([("a", 3)], 0)


@pytest.mark.parametrize("seed", range(20))
def test_plan_partitions_and_balances(seed):
    rng = np.random.default_rng(seed)
    sizes = [(f"o{i}", int(rng.integers(0, 50))) for i in range(int(rng.integers(1, 6)))]
    workers = int(rng.integers(1, 10))
    jobs = plan_jobs(sizes, workers)
    for name, n in sizes:
        covered = sorted(i for j in jobs if j.object_name == name for i in range(j.start, j.stop))
        assert covered == list(range(n))
    loads = [sum(j.size for j in jobs if j.worker == w) for w in range(workers)]
    assert max(loads) - min(loads) <= 1


def test_job_dirname():
    assert JobShard("cube", 0, 250, 0).dirname == "cube__000000_000250"


# -- corpus ---------------------------------------------------------------------------

def test_scan_corpus_classes(corpus):
    assert [(n, c) for n, c, _ in scan_corpus(corpus)] == \
        [("cube", "box"), ("cylinder", "cylinder"), ("wedge", "wedge")]


def test_bad_object_is_quarantined(tmp_path):
    write_toy_corpus(tmp_path / "c")
    (tmp_path / "c" / "junk").mkdir()
    (tmp_path / "c" / "junk" / "open.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    cfg = small_config(tmp_path / "c")
    run_pipeline(cfg, tmp_path / "o", stages=["preprocess"])
    objs = json.loads((tmp_path / "o" / "preprocess" / "objects.json").read_text())
    assert [o["name"] for o in objs["objects"]] == ["cube", "cylinder", "wedge"]
    assert [q["name"] for q in objs["quarantined"]] == ["open"]


# -- full runs on the small grid --------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("small")
    cfg = small_config(corpus)
    summary = run_pipeline(cfg, out)
    return cfg, out, summary


def test_summary_reconciles(small_run):
    cfg, out, summary = small_run
    assert summary["checks"] and all(summary["checks"].values())
    sim = summary["simulate"]
    assert sum(sim["outcomes"].values()) == sim["attempts"]
    assert json.loads((out / "summary.json").read_text()) == summary


def test_stage_rerun_is_noop(small_run):
    cfg, out, _ = small_run
    before = {p: p.stat().st_mtime_ns for p in out.rglob("*") if p.is_file()}
    run_pipeline(cfg, out)
    after = {p: p.stat().st_mtime_ns for p in out.rglob("*") if p.is_file()}
    changed = [p.name for p in before if before[p] != after[p]]
    assert set(changed) <= {"summary.json"}


def test_config_change_invalidates_downstream_only(small_run, tmp_path):
    cfg, out, _ = small_run
    import shutil

    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    mtime = (copy / "simulate" / "stage.json").stat().st_mtime_ns
    run_pipeline(cfg.replace(split={"validation_fraction": 0.5}), copy)
    assert (copy / "simulate" / "stage.json").stat().st_mtime_ns == mtime
    rep = json.loads((copy / "split" / "stage.json").read_text())
    assert rep["input_hash"] != json.loads((out / "split" / "stage.json").read_text())["input_hash"]


def test_final_shards_valid(small_run):
    cfg, out, _ = small_run
    for m in cfg.mappings:
        ds = read_shard(out / "postprocess" / m, verify_hash=True)
        assert len(ds) > 0
        assert ds.images.shape[1:] == (4, 16, 16)
        n = ds.grasps[:, 9:].reshape(-1, 3, 3)
        assert np.allclose(np.linalg.norm(n, axis=2), 1, atol=1e-5)


def test_worker_count_does_not_change_bytes(small_run, tmp_path):
    cfg, out, _ = small_run
    out3 = tmp_path / "w3"
    run_pipeline(cfg.replace(workers=3), out3)
    assert tree_bytes(out) == tree_bytes(out3)


def test_resume_after_interrupt(small_run, tmp_path, monkeypatch):
    cfg, out, _ = small_run
    part = tmp_path / "resume"
    calls = {"n": 0}
    real = pipeline.run_job

    def flaky(*args):
        calls["n"] += 1
        if calls["n"] == 2:
            raise KeyboardInterrupt
        return real(*args)

    monkeypatch.setattr(pipeline, "_run_job", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_pipeline(cfg, part)
    assert not (part / "simulate" / "stage.json").exists()
    done = list((part / "simulate" / "jobs").glob("*/job.json"))
    assert len(done) == 1
    monkeypatch.setattr(pipeline, "_run_job", real)
    run_pipeline(cfg, part)
    assert tree_bytes(part) == tree_bytes(out)


def test_unknown_stage_rejected(small_run):
    cfg, out, _ = small_run
    with pytest.raises(StageError):
        run_pipeline(cfg, out, stages=["bake"])


def test_cli_end_to_end(tmp_path, corpus, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"corpus": str(corpus), "grid": SMALL_GRID, "cap": 30,
                                    "batch_size": 12, "camera": {"resolution": 16}}))
    out = str(tmp_path / "o")
    for stage in ("preprocess", "candidates", "simulate", "postprocess", "split"):
        assert cli.main([stage, "--config", str(cfg_path), "--out", out]) == 0
    assert cli.main(["report", "--config", str(cfg_path), "--out", out]) == 0
    pytest.importorskip("PIL")
    assert cli.main(["preview", "--config", str(cfg_path), "--out", out, "--count", "2"]) == 0
    pngs = list((tmp_path / "o" / "preview" / "otm").glob("*.png"))
    assert len(pngs) % 3 == 0


def test_verify_stored_grasps_reachable(small_run):
    from graspsim.verify import verify_grasps

    cfg, out, _ = small_run
    ds = read_shard(out / "postprocess" / "oto")
    meshes = {e["name"]: pipeline.load_prepared(cfg, e).mesh for e in pipeline._objects(out)}
    res = verify_grasps(ds, meshes, cfg.hand, limit=5)
    assert len(res) == min(5, len(ds))
    assert all(r.rms_error < 0.005 for r in res)
    # Contacts spread far beyond the hand's span cannot be reached.
    wide = ds.grasps.astype(np.float64).copy()
    wide[:, :9] *= 10
    bad = verify_grasps(ds, meshes, cfg.hand, wide, limit=3)
    assert all(r.rms_error > 0.05 for r in bad)
    with pytest.raises(ValueError):
        verify_grasps(ds, meshes, cfg.hand, wide[:1])


def test_cli_verify_writes_report(small_run, tmp_path):
    cfg, out, _ = small_run
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg.to_dict()))
    assert cli.main(["verify", "--config", str(cfg_path), "--out", str(out), "--limit", "2"]) == 0
    rep = json.loads((out / "verify" / "oto.json").read_text())
    assert rep["count"] == 2 and rep["reachable"] == 2
