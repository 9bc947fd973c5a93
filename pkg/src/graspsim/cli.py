"""Command-line driver.

    python -m graspsim run --config cfg.json --out data/ --workers 4
    python -m graspsim report --out data/

Every subcommand accepts ``--config``, ``--seed``, ``--workers`` and
``--out``; ``GRASPSIM_WORKERS`` sets the default worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datastore as store
from .config import ConfigError, load_config
from .pipeline import STAGE_FUNCS, StageError, run_pipeline, summarize, write_toy_corpus

log = logging.getLogger("graspsim")


def _dataset_path(out: Path, mapping: str, split: str | None) -> Path:
    if split:
        return out / "split" / mapping / split
    for stage in ("postprocess", "simulate"):
        p = out / stage / mapping
        if (p / "manifest.json").exists():
            return p
    raise StageError(f"no dataset for mapping {mapping!r} under {out}")


def cmd_stage(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    info = STAGE_FUNCS[args.command](cfg, out)
    print(json.dumps(info["counts"], indent=1, sort_keys=True))
    return 0


def cmd_run(args, cfg):
    summary = run_pipeline(cfg, args.out)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0 if all(summary["checks"].values()) else 1


def cmd_report(args, cfg):
    print(json.dumps(summarize(Path(args.out)), indent=1, sort_keys=True))
    return 0


def cmd_preview(args, cfg):
    from PIL import Image

    out = Path(args.out)
    ds = store.read_shard(_dataset_path(out, args.mapping, args.split))
    dest = out / "preview" / args.mapping
    dest.mkdir(parents=True, exist_ok=True)
    for i in range(min(args.count, len(ds))):
        obj, cid, att = ds.keys[i]
        stem = f"{obj}_{cid}_{att}"
        rgb = np.clip(ds.images[i, :3].transpose(1, 2, 0) * 255, 0, 255).astype(np.uint8)
        depth = np.clip(ds.images[i, 3] * 255, 0, 255).astype(np.uint8)
        Image.fromarray(rgb).save(dest / f"{stem}_rgb.png")
        Image.fromarray(depth).save(dest / f"{stem}_depth.png")
        Image.fromarray(ds.masks[i] * 255).save(dest / f"{stem}_mask.png")
    print(f"wrote {min(args.count, len(ds))} preview triplets to {dest}")
    return 0


def cmd_verify(args, cfg):
    from .pipeline import _objects, load_prepared
    from .verify import verify_grasps

    out = Path(args.out)
    ds = store.read_shard(_dataset_path(out, args.mapping, args.split))
    meshes = {e["name"]: load_prepared(cfg, e).mesh for e in _objects(out)}
    grasps = np.load(args.predictions) if args.predictions else None
    results = verify_grasps(ds, meshes, cfg.hand, grasps, cfg.scene.table_height, args.limit)
    rows = [{"key": list(r.key), "residual": r.residual, "rms_error": r.rms_error,
             "converged": r.converged, "proximal_deg": r.proximal_deg, "collision": r.collision}
            for r in results]
    report = {"mapping": args.mapping, "count": len(rows),
              "reachable": sum(r["rms_error"] < args.tolerance and r["collision"] is None for r in rows),
              "tolerance": args.tolerance, "results": rows}
    dest = out / "verify" / f"{args.mapping}.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(json.dumps(report, indent=1, sort_keys=True))
    print(f"{report['reachable']}/{report['count']} grasps reachable within {args.tolerance} m; "
          f"details in {dest}")
    return 0


def cmd_toy(args, cfg):
    for p in write_toy_corpus(args.directory):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--workers", type=int, help="worker processes (overrides GRASPSIM_WORKERS)")
    common.add_argument("--out", default="graspsim_out", help="output directory")
    common.add_argument("--corpus", help="override the corpus directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="graspsim", description="Grasp dataset synthesis pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGE_FUNCS:
        s = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        s.set_defaults(func=cmd_stage)
    sub.add_parser("run", parents=[common], help="run every stage").set_defaults(func=cmd_run)
    sub.add_parser("report", parents=[common], help="print the summary").set_defaults(func=cmd_report)

    s = sub.add_parser("preview", parents=[common], help="PNG dumps of RGB, depth and mask")
    s.add_argument("--mapping", default="otm", choices=("oto", "otm"))
    s.add_argument("--split", choices=("train", "validation", "test"))
    s.add_argument("--count", type=int, default=8)
    s.set_defaults(func=cmd_preview)

    s = sub.add_parser("verify", parents=[common], help="wrist-pose fit of stored or predicted grasps")
    s.add_argument("--mapping", default="oto", choices=("oto", "otm"))
    s.add_argument("--split", choices=("train", "validation", "test"))
    s.add_argument("--predictions", help=".npy array (n, 18) of camera-frame grasps")
    s.add_argument("--limit", type=int)
    s.add_argument("--tolerance", type=float, default=0.005, help="RMS fingertip error bound (m)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("toy-corpus", help="write the cube/cylinder/wedge corpus")
    s.add_argument("directory")
    s.set_defaults(func=cmd_toy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.command != "toy-corpus":
            cfg = load_config(args.config, args.seed, args.workers)
            if args.corpus:
                cfg = cfg.replace(corpus=str(Path(args.corpus).resolve()))
        return args.func(args, cfg)
    except (ConfigError, StageError, store.ShardError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2
    except Exception:
        log.exception("stage failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
