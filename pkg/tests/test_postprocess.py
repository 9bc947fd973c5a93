import numpy as np
import pytest
from hypothesis import given, strategies as st

from graspsim.mesh import box_mesh
from graspsim.postprocess import (camera_heights, clean, depth_variance, sigma_filter, sigma_outliers,
                                  sigma_scores, split_dataset, table_bisect_filter, validation_count,
                                  variance_filter)
from graspsim.render import Camera, decode_depth, encode_depth, render_object
from graspsim.transforms import Transform, rot_x
from synth import set_camera_heights, synthetic


# -- variance -------------------------------------------------------------------

def test_constant_image_removed():
    ds = synthetic({"a": "A"}, 3)
    ds.images[0, 3] = 0.25
    kept, rep = variance_filter(ds)
    assert rep.removed == 1 and rep.removed_keys == [("a", 0, 0)]
    assert rep.input == rep.removed + rep.retained == 3
    assert len(kept) == 2


def test_checkerboard_two_point_variance():
    ds = synthetic({"a": "A"}, 1)
    board = (np.indices((8, 8)).sum(axis=0) % 2).astype(np.float32)
    ds.images[0, 3] = board
    v = depth_variance(ds.images)[0]
    assert v == pytest.approx((0.74 / 2) ** 2, abs=1e-12)
    assert v == pytest.approx(0.1369)
    assert variance_filter(ds)[1].removed == 0


def test_variance_threshold_is_strict():
    ds = synthetic({"a": "A"}, 1)
    v = float(depth_variance(ds.images)[0])
    assert variance_filter(ds, threshold=v)[1].removed == 0
    assert variance_filter(ds, threshold=np.nextafter(v, np.inf))[1].removed == 1


def test_variance_exactly_at_default_threshold_retained():
    # Two-valued depth with spread 2*sqrt(1e-3) has variance 1e-3 up to rounding;
    # the filter keeps the sample when the computed variance is not below 1e-3.
    ds = synthetic({"a": "A"}, 1)
    lo = 0.3
    hi = lo + 2 * np.sqrt(1e-3)
    board = np.indices((8, 8)).sum(axis=0) % 2
    ds.images[0, 3] = encode_depth(np.where(board, hi, lo)).astype(np.float32)
    v = depth_variance(ds.images)[0]
    assert v == pytest.approx(1e-3, rel=1e-5)
    assert variance_filter(ds, threshold=v)[1].removed == 0


def test_rendered_flat_face_closeup_removed():
    big = box_mesh((0.6, 0.6, 0.1)).translated((0, 0, 0.70))
    cam = Camera(Transform(rot_x(np.pi), (0, 0, 0.80)))
    img = render_object(big, cam)
    assert img.mask.all()
    ds = synthetic({"a": "A"}, 1, size=128)
    ds.images[0] = img.stacked()
    manual = decode_depth(img.depth).astype(np.float64).var()
    assert depth_variance(ds.images)[0] == pytest.approx(manual, abs=1e-18)
    assert variance_filter(ds)[1].removed == 1


# -- table bisect -----------------------------------------------------------------

def test_camera_at_table_height_removed():
    ds = synthetic({"a": "A"}, 2)
    set_camera_heights(ds, [0.65, 1.0])
    assert np.allclose(camera_heights(ds), [0.65, 1.0])
    kept, rep = table_bisect_filter(ds)
    assert rep.removed_keys == [("a", 0, 0)] and len(kept) == 1


def test_bisect_sweep_matches_band():
    z = np.linspace(0.55, 0.75, 2001)
    z = z[(np.abs(z - 0.64) > 1e-9) & (np.abs(z - 0.66) > 1e-9)]   # band edges are float-ambiguous
    ds = synthetic({"a": "A"}, len(z))
    set_camera_heights(ds, z)
    _, rep = table_bisect_filter(ds)
    removed = {k[1] for k in rep.removed_keys}
    expected = {i for i, h in enumerate(z) if 0.64 < h < 0.66}
    assert removed == expected


# -- sigma ------------------------------------------------------------------------------

def test_injected_ten_sigma_is_unique_removal():
    rng = np.random.default_rng(0)
    ds = synthetic({"a": "A"}, 1001)
    X = rng.normal(size=(1001, 18))
    X = np.clip(X, -3.5, 3.5)
    X[500, 7] = 10 * X[:, 7].std() + X[:, 7].mean()
    ds.grasps[:] = X
    kept, rep = sigma_filter(ds)
    assert rep.removed_keys == [("a", 500, 0)]
    # independent mean/std oracle
    Y = ds.grasps.astype(np.float64)
    z = np.abs(Y - Y.mean(0)) / Y.std(0)
    assert np.nonzero((z > 4).any(axis=1))[0].tolist() == [500]


def test_identical_records_never_removed():
    ds = synthetic({"a": "A"}, 20)
    ds.grasps[:] = ds.grasps[0]
    assert sigma_filter(ds)[1].removed == 0


def test_exactly_four_sigma_retained():
    X = np.zeros((17, 18))
    X[16, 0] = 17.0                       # mean 1, population std 4, deviation 16
    assert sigma_scores(X)[16, 0] == 4.0
    assert not sigma_outliers(X).any()
    ds = synthetic({"a": "A"}, 17)
    ds.grasps[:] = X
    _, rep = sigma_filter(ds)
    assert rep.removed == 0
    assert [r["key"] for r in rep.notes["review"]] == [["a", 16, 0]]


def test_sigma_is_per_object_and_small_groups_pass():
    # A lone outlier among n samples scores at most sqrt(n - 1), so use n = 30.
    ds = synthetic({"a": "A", "b": "B", "c": "C"}, 30)
    ds.grasps[:] = 0
    ds.grasps[16, 0] = 100.0              # outlier inside object a
    ds.grasps[30:60] = 100.0              # object b is shifted as a whole
    kept, rep = sigma_filter(ds)
    assert rep.removed_keys == [("a", 16, 0)]
    single = synthetic({"x": "X"}, 1)
    assert sigma_filter(single)[1].removed == 0


@given(st.integers(0, 2**32 - 1))
def test_sigma_vacuous_when_everything_within_k(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (50, 18))
    sd = X.std(0)
    assert not sigma_outliers(X, k=float((np.abs(X - X.mean(0)) / sd).max()) + 1e-9).any()


def test_clean_order_and_report_arithmetic():
    ds = synthetic({"a": "A", "b": "B"}, 30, seed=3)
    ds.images[0, 3] = 0.5
    set_camera_heights(ds, np.r_[1.0, 0.651, np.ones(58)])
    kept, reports = clean(ds)
    assert [r.stage for r in reports] == ["variance", "table_bisect", "sigma"]
    assert reports[0].removed_keys == [("a", 0, 0)]
    assert reports[1].removed_keys == [("a", 1, 1)]
    for a, b in zip(reports, reports[1:]):
        assert a.retained == b.input
    for r in reports:
        assert r.input == r.removed + r.retained
        for e in r.per_object.values():
            assert e["input"] == e["removed"] + e["retained"]
    again, _ = clean(ds)
    assert again.keys == kept.keys


# -- split -----------------------------------------------------------------------------

def test_validation_count_rounds_half_up():
    assert validation_count(200, 0.10) == 20
    assert validation_count(5, 0.10) == 1          # 0.5 rounds up
    assert validation_count(4, 0.10) == 0
    assert validation_count(15, 0.10) == 2         # 1.5 rounds up
    assert validation_count(25, 0.10) == 3


def test_three_objects_of_one_hundred():
    ds = synthetic({"o1": "mug", "o2": "mug", "o3": "mug"}, 100, size=2)
    out, rep = split_dataset(ds, 0.10, seed=0)
    assert {k: len(v) for k, v in out.items()} == {"train": 180, "validation": 20, "test": 100}
    assert len(set(out["test"].object_names())) == 1


def test_single_object_class_goes_to_test():
    ds = synthetic({"solo": "lamp", "m1": "mug", "m2": "mug"}, 10, size=2)
    out, rep = split_dataset(ds, 0.10, seed=1)
    assert "solo" in out["test"].object_names()
    assert "solo" not in out["train"].object_names() + out["validation"].object_names()
    assert rep["classes"]["lamp"]["train"] == 0


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 4), min_size=1, max_size=4),
       st.integers(1, 15))
def test_split_partition_properties(seed, objs_per_class, per_object):
    objects = {f"c{c}_o{o}": f"c{c}" for c, k in enumerate(objs_per_class) for o in range(k)}
    ds = synthetic(objects, per_object, size=2)
    out, rep = split_dataset(ds, 0.10, seed)
    keys = [set(out[s].keys) for s in ("train", "validation", "test")]
    assert set.union(*keys) == set(ds.keys)
    assert sum(len(k) for k in keys) == len(ds)
    test_objs = set(out["test"].object_names())
    assert not test_objs & set(out["train"].object_names() + out["validation"].object_names())
    for cls, info in rep["classes"].items():
        n = info["train"] + info["validation"]
        assert info["validation"] == validation_count(n, 0.10)
        if len(info["objects"]) == 1:
            assert info["test"] == per_object and n == 0


def test_split_deterministic_and_seed_sensitive():
    objects = {f"o{i}": "c" for i in range(5)}
    ds = synthetic(objects, 40, size=2)
    a, _ = split_dataset(ds, 0.1, seed=7)
    b, _ = split_dataset(ds, 0.1, seed=7)
    for s in a:
        assert a[s].keys == b[s].keys
        assert a[s].grasps.tobytes() == b[s].grasps.tobytes()
    diffs = [split_dataset(ds, 0.1, seed=s)[0]["validation"].keys != a["validation"].keys
             for s in range(8, 12)]
    assert any(diffs)


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_dataset(synthetic({"a": "A"}, 2, size=2), 1.0)
