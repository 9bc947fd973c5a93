"""Build a small dataset end to end and inspect the shards.

Writes the three-primitive toy corpus, runs every stage on a coarse grid and
reads the final shards back. The same stages are available from the command
line as ``graspsim run``.
Run: python demos/03_toy_dataset.py [out_dir]
"""
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from graspsim.config import PipelineConfig
from graspsim.datastore import read_shard
from graspsim.mesh import box_mesh, write_obj
from graspsim.pipeline import run_pipeline, write_toy_corpus
from graspsim.render import decode_depth

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="graspsim_"))
write_toy_corpus(out / "corpus")
# a class with a single object only ever lands in the test split, so give "box" a second member
(out / "corpus" / "box" / "post.obj").write_text(write_obj(box_mesh((0.05, 0.05, 0.12), name="post")))

coarse = {"global_x": [0, 180, 45], "global_y": [0, 360, 90], "global_z": [0, 360, 90],
          "local_x": [0, 180, 45], "local_y": [0, 360, 90], "local_z": [0, 360, 90]}
cfg = PipelineConfig.from_dict({"corpus": str(out / "corpus"), "grid": coarse, "cap": 200,
                                "batch_size": 80, "camera": {"resolution": 32}})
summary = run_pipeline(cfg, out / "run")
print("simulate outcomes:", summary["simulate"]["outcomes"])
print("checks:", summary["checks"])

for m in cfg.mappings:
    ds = read_shard(out / "run" / "postprocess" / m, verify_hash=True)
    print(f"\n[{m}] {len(ds)} samples after cleaning, images {ds.images.shape}")
    if len(ds):
        d = decode_depth(ds.images[:, 3])
        print(f"  depth range {d.min():.3f}..{d.max():.3f} m, grasp std {ds.grasps.std(0)[:3]}")
    for split in ("train", "validation", "test"):
        part = out / "run" / "split" / m / split
        if part.exists():
            print(f"  {split}: {len(read_shard(part))}")

print("\nmanifest excerpt:")
man = json.loads((out / "run" / "postprocess" / "oto" / "manifest.json").read_text())
print(json.dumps({k: man[k] for k in ("schema_version", "mapping", "count", "key_order")}, indent=1))
print("outputs in", out)
