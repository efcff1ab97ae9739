import math

import numpy as np
import pytest

from geonet.data import (GRINDING_RANGES, DataError, Dataset, GrindingSurrogateConfig, denormalize,
                         gen_function, gen_grinding_surrogate, load_csv, normalize, split,
                         target_function, write_csv)


def test_function_values():
    assert target_function(0.3) == pytest.approx(100 + 2.5 - 6, abs=1e-12)
    assert target_function(0.9) == pytest.approx(1 / 0.37 + 25 - 6, abs=1e-12)
    assert target_function(0.0) == pytest.approx(10 + 1 / 0.85 - 6, abs=1e-12)
    assert target_function(0.9) == pytest.approx(21.7027, abs=1e-4)
    assert target_function(0.0) == pytest.approx(5.1765, abs=1e-4)


def test_gen_function_shapes_and_seeding():
    grid_a = gen_function(11, seed=1, sampling="grid")
    grid_b = gen_function(11, seed=99, sampling="grid")
    assert grid_a.d == 1 and grid_a.m == 1 and grid_a.n == 11
    assert np.array_equal(grid_a.X, grid_b.X)
    uni_a = gen_function(50, seed=3)
    assert np.array_equal(uni_a.X, gen_function(50, seed=3).X)
    assert not np.array_equal(uni_a.X, gen_function(50, seed=4).X)
    assert np.all((uni_a.X >= 0) & (uni_a.X <= 1))
    assert np.allclose(uni_a.Y[:, 0], target_function(uni_a.X[:, 0]))
    with pytest.raises(ValueError):
        gen_function(1)


def surrogate_oracle(X):
    # the documented formula, written out independently of the library
    lo = np.array([v[0] for v in GRINDING_RANGES.values()])
    hi = np.array([v[1] for v in GRINDING_RANGES.values()])
    u1, u2, u3, u4, u5 = ((X - lo) / (hi - lo)).T
    s = (0.6 - 0.35 * u1 / (1 + 0.6 * u2) + 0.15 * u2 * (1 - u3) - 0.2 * (u3 - 0.4) ** 2
         + 0.1 * np.sin(np.pi * u4) - 0.1 * u1 * u5 + 0.05 * u5)
    return 50 + 30 * s


def test_grinding_surrogate():
    ds = gen_grinding_surrogate(GrindingSurrogateConfig(n=200, seed=7, noise_sd=0.0))
    assert (ds.d, ds.m) == (5, 1)
    assert ds.feature_names == ["R1", "R2", "R3", "alpha1", "alpha2"]
    assert ds.target_names == ["PS"]
    assert np.allclose(ds.Y[:, 0], surrogate_oracle(ds.X), rtol=0, atol=1e-12)
    again = gen_grinding_surrogate(GrindingSurrogateConfig(n=200, seed=7, noise_sd=0.0))
    assert np.array_equal(ds.X, again.X) and np.array_equal(ds.Y, again.Y)
    noisy = gen_grinding_surrogate(GrindingSurrogateConfig(n=200, seed=7, noise_sd=0.05))
    assert np.array_equal(noisy.X, ds.X) and not np.array_equal(noisy.Y, ds.Y)
    assert gen_grinding_surrogate(GrindingSurrogateConfig(n=3)).d == 5


def test_load_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n")
    ds = load_csv(p, 1)
    assert (ds.d, ds.m, ds.n) == (2, 1, 2)
    assert ds.feature_names == ["a", "b"] and ds.target_names == ["y"]


@pytest.mark.parametrize("body, match", [
    ("a,y\n1,NaN\n", r":2:2"),
    ("a,y\n1,2\n3\n", r":3"),
    ("a,y\n1,zz\n", r":2:2"),
    ("a,y\n1,inf\n", r"non-finite"),
    ("y\n1\n", r"columns"),
    ("", r"empty"),
])
def test_load_csv_rejects(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=match):
        load_csv(p, 1)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(30, 3)) * 1e5, rng.normal(size=(30, 2)) / 3, ["p", "q", "r"], ["s", "t"])
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = load_csv(p, 2)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.Y, ds.Y)
    assert back.feature_names == ds.feature_names and back.target_names == ds.target_names


def test_normalize_examples():
    ds = Dataset([[0.0], [1.0], [2.0]], [[7.0], [7.0], [7.0]])
    nd, stats = normalize(ds)
    assert np.array_equal(nd.X[:, 0], [0, 0.5, 1])
    assert np.array_equal(nd.Y[:, 0], [0.5, 0.5, 0.5])
    assert stats.target_min[0] == stats.target_max[0] == 7.0


def test_denormalize_round_trip():
    rng = np.random.default_rng(5)
    ds = Dataset(rng.normal(size=(40, 4)) * 50, rng.uniform(-3, 9, size=(40, 2)))
    nd, stats = normalize(ds)
    assert nd.X.min() == 0 and nd.X.max() == 1
    back = denormalize(nd, stats)
    assert np.allclose(back.X, ds.X, rtol=0, atol=1e-12 * np.abs(ds.X).max())
    assert np.allclose(back.Y, ds.Y, rtol=0, atol=1e-12 * np.abs(ds.Y).max())


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 1)), np.ones((2, 1)))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 1)), np.array([[1.0], [np.nan]]))
    with pytest.raises(DataError):
        Dataset(np.ones((2, 2)), np.ones((2, 1)), ["only_one"], ["y"])


def test_split():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0)[:, None] * 2)
    tr, te = split(ds, 0.7, seed=1)
    assert (tr.n, te.n) == (7, 3)
    tr2, te2 = split(ds, 0.7, seed=1)
    assert np.array_equal(tr.X, tr2.X) and np.array_equal(te.X, te2.X)
    rows = sorted(map(tuple, np.vstack([np.hstack([tr.X, tr.Y]), np.hstack([te.X, te.Y])])))
    assert rows == sorted(map(tuple, np.hstack([ds.X, ds.Y])))
    assert np.array_equal(tr.Y, tr.X * 2)
    with pytest.raises(ValueError):
        split(ds, 1.0, 0)
    with pytest.raises(ValueError):
        split(ds, 0.0, 0)


def test_split_hits_2000_400():
    ds = gen_function(2400, seed=0)
    tr, te = split(ds, 2000 / 2400, seed=3)
    assert (tr.n, te.n) == (2000, 400)
    assert math.ceil(0.7 * 1599) == split(Dataset(np.zeros((1599, 1)), np.zeros((1599, 1))), 0.7, 0)[0].n
