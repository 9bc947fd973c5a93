"""Small synthetic datasets for filter, split and shard tests."""
import numpy as np

from graspsim.datastore import FRAME_NAMES, Dataset
from graspsim.transforms import Transform, encode_frame


def synthetic(objects, per_object=10, mapping="oto", size=8, seed=0, camera_z=1.0):
    """``objects`` maps object name -> class name; rows are random but valid."""
    rng = np.random.default_rng(seed)
    samples = []
    for name, cls in objects.items():
        for cid in range(per_object):
            samples.append({"object": name, "class": cls, "candidate_id": cid, "attempt_index": cid % 4,
                            "otm_fallback": False})
    n = len(samples)
    images = rng.uniform(0, 1, (n, 4, size, size)).astype(np.float32)
    masks = (images[:, 3] < 0.5).astype(np.uint8)
    grasps = rng.normal(size=(n, 18)).astype(np.float32)
    contacts = rng.normal(size=(n, 18))
    props = rng.normal(size=(n, 13))
    frames = np.tile(encode_frame(Transform.identity()), (n, len(FRAME_NAMES), 1))
    ds = Dataset(mapping, samples, images, masks, grasps, contacts, props, frames)
    set_camera_heights(ds, np.full(n, camera_z))
    return ds


def set_camera_heights(ds, heights, table_z=0.65):
    """Place every camera at world height ``heights`` with the table at ``table_z``."""
    work = FRAME_NAMES.index("frame_world2work")
    ds.frames[:, work] = encode_frame(Transform.from_translation((0, 0, table_z)))
    for m in ("oto", "otm"):
        k = FRAME_NAMES.index(f"frame_work2cam_{m}")
        ds.frames[:, k, 11] = np.asarray(heights) - table_z
