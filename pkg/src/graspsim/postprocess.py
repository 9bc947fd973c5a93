"""Cleaning filters and the object-disjoint train/validation/test split.

Filters run in a fixed order: depth variance, table bisect, sigma outliers.
Each returns the retained dataset and a :class:`FilterReport`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .candidates import derive_seed
from .datastore import FRAME_NAMES, Dataset
from .render import FAR, NEAR, decode_depth

log = logging.getLogger(__name__)


@dataclass
class FilterReport:
    stage: str
    input: int
    removed: int
    retained: int
    per_object: dict = field(default_factory=dict)
    removed_keys: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage, "input": self.input, "removed": self.removed,
            "retained": self.retained, "per_object": self.per_object,
            "removed_keys": [list(k) for k in self.removed_keys], "notes": self.notes,
        }


def _apply(ds: Dataset, remove: np.ndarray, stage: str, notes=None):
    remove = np.asarray(remove, dtype=bool)
    per = {}
    for name, r in zip(ds.object_names(), remove):
        e = per.setdefault(name, {"input": 0, "removed": 0, "retained": 0})
        e["input"] += 1
        e["removed" if r else "retained"] += 1
    keys = ds.keys
    rep = FilterReport(stage, len(ds), int(remove.sum()), int((~remove).sum()),
                       dict(sorted(per.items())), [keys[i] for i in np.nonzero(remove)[0]],
                       notes or {})
    return ds.subset(np.nonzero(~remove)[0]), rep


def depth_variance(images, near: float = NEAR, far: float = FAR) -> np.ndarray:
    """Population variance of each decoded depth channel, ``(n,)``."""
    imgs = np.asarray(images)
    depth = imgs[:, 3] if imgs.ndim == 4 else imgs
    metric = decode_depth(depth, near, far)
    return metric.reshape(len(metric), -1).var(axis=1)


def variance_filter(ds: Dataset, threshold: float = 1e-3, near: float = NEAR, far: float = FAR):
    """Drop samples whose decoded depth variance is strictly below ``threshold`` (m^2)."""
    var = depth_variance(ds.images, near, far) if len(ds) else np.zeros(0)
    return _apply(ds, var < threshold, "variance", {"threshold": threshold, "units": "m^2"})


def camera_heights(ds: Dataset) -> np.ndarray:
    """World z of each sample's camera for the dataset's mapping."""
    if not len(ds):
        return np.zeros(0)
    k_cam = FRAME_NAMES.index(f"frame_work2cam_{ds.mapping}")
    k_work = FRAME_NAMES.index("frame_world2work")
    cam = ds.frames[:, k_cam].reshape(-1, 3, 4)
    work = ds.frames[:, k_work].reshape(-1, 3, 4)
    world = np.einsum("nij,nj->ni", work[:, :, :3], cam[:, :, 3]) + work[:, :, 3]
    return world[:, 2]


def table_bisect_filter(ds: Dataset, epsilon: float = 0.01, table_height: float = 0.65):
    """Drop samples whose camera sits within ``epsilon`` of the table plane."""
    z = camera_heights(ds)
    return _apply(ds, np.abs(z - table_height) < epsilon, "table_bisect",
                  {"epsilon": epsilon, "table_height": table_height})


def sigma_scores(X) -> np.ndarray:
    """Per-entry ``|x - mean| / std`` with population std; 0 where std is 0."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(X - mu) / sd
    return np.where(sd > 0, z, 0.0)


def sigma_outliers(X, k: float = 4.0) -> np.ndarray:
    """Rows with any scalar dimension strictly beyond ``k`` population stds."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) < 2:
        return np.zeros(len(X), dtype=bool)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    out = (np.abs(X - mu) > k * sd) & (sd > 0)
    return out.any(axis=1)


def sigma_filter(ds: Dataset, k: float = 4.0, review_margin: float = 0.5):
    """Per-object outlier removal over the 18 grasp dimensions.

    Samples with a maximum score in ``(k - review_margin, k]`` are kept but
    listed for review in the report notes.
    """
    names = np.array(ds.object_names(), dtype=object)
    X = ds.grasps.astype(np.float64)
    remove = np.zeros(len(ds), dtype=bool)
    review = []
    keys = ds.keys
    for name in sorted(set(names.tolist())):
        idx = np.nonzero(names == name)[0]
        if len(idx) < 2:
            continue
        remove[idx] = sigma_outliers(X[idx], k)
        score = sigma_scores(X[idx]).max(axis=1)
        for i, s, r in zip(idx, score, remove[idx]):
            if not r and s > k - review_margin:
                review.append({"key": list(keys[i]), "score": float(s)})
    return _apply(ds, remove, "sigma", {"k": k, "variable": "per scalar grasp dimension",
                                        "std": "population", "review": review})


def clean(ds: Dataset, variance_threshold=1e-3, bisect_epsilon=0.01, sigma_k=4.0,
          table_height=0.65, review_margin=0.5, near=NEAR, far=FAR):
    """The three filters in their fixed order."""
    reports = []
    ds, r = variance_filter(ds, variance_threshold, near, far)
    reports.append(r)
    ds, r = table_bisect_filter(ds, bisect_epsilon, table_height)
    reports.append(r)
    ds, r = sigma_filter(ds, sigma_k, review_margin)
    reports.append(r)
    return ds, reports


# -- splits -----------------------------------------------------------------------------

def validation_count(n: int, fraction: float) -> int:
    """``fraction * n`` rounded half up, computed exactly."""
    return math.floor(Fraction(repr(float(fraction))) * n + Fraction(1, 2))


def split_dataset(ds: Dataset, validation_fraction: float = 0.10, seed: int = 0):
    """Object-disjoint split.

    For each class with two or more objects one object (seeded choice) goes to
    test; ``validation_count`` of the remaining samples go to validation and
    the rest to train. Single-object classes go entirely to test.
    """
    if not 0 < validation_fraction < 1:
        raise ValueError("validation fraction must lie in (0, 1)")
    classes = np.array([s.get("class") or s["object"] for s in ds.samples], dtype=object)
    names = np.array(ds.object_names(), dtype=object)
    assign = np.empty(len(ds), dtype=object)
    per_class = {}
    for cls in sorted(set(classes.tolist())):
        idx = np.nonzero(classes == cls)[0]
        objs = sorted(set(names[idx].tolist()))
        rng = np.random.default_rng(derive_seed(seed, "split", cls))
        if len(objs) < 2:
            assign[idx] = "test"
            per_class[cls] = {"objects": objs, "test_object": objs[0], "train": 0,
                              "validation": 0, "test": int(len(idx))}
            continue
        test_obj = objs[int(rng.integers(len(objs)))]
        test_idx = idx[names[idx] == test_obj]
        rest = idx[names[idx] != test_obj]
        n_val = validation_count(len(rest), validation_fraction)
        val = rest[np.sort(rng.permutation(len(rest))[:n_val])]
        assign[test_idx] = "test"
        assign[rest] = "train"
        assign[val] = "validation"
        per_class[cls] = {"objects": objs, "test_object": test_obj, "train": int(len(rest) - n_val),
                          "validation": int(n_val), "test": int(len(test_idx))}
    out = {s: ds.subset(np.nonzero(assign == s)[0]) for s in ("train", "validation", "test")}
    report = {"seed": seed, "validation_fraction": validation_fraction, "classes": per_class,
              "sizes": {s: len(d) for s, d in out.items()}}
    return out, report
