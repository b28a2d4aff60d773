import numpy as np
import pytest

from mfbm import ContractError, GridPath, PathCache, grid_hash, l2_energy, uniform_grid
from mfbm.rng import STREAM_FBM, STREAM_WIENER, normals, resolve_seed, substream


def test_gridpath_shapes_and_cells():
    t = uniform_grid(1.0, 4)
    p = GridPath(t, t ** 2)
    assert p.values.shape == (5, 1) and p.n_steps == 4 and not p.batched
    assert np.allclose(p.cell_values()[:, 0], 0.5 * (t[1:] ** 2 + t[:-1] ** 2))
    assert np.allclose(p.increments()[:, 0], np.diff(t ** 2))
    with pytest.raises(ContractError):
        GridPath(t, np.zeros((4, 1)))
    with pytest.raises(ContractError):
        GridPath([0.0, 0.5, 0.4], np.zeros(3))
    c = GridPath(t, np.zeros((4, 2)), "cell")
    with pytest.raises(ContractError):
        c.increments()


def test_csv_roundtrip(tmp_path):
    t = uniform_grid(1.0, 7)
    rng = np.random.default_rng(0)
    p = GridPath(t, rng.normal(size=(3, 8, 2)))
    f = tmp_path / "p.csv"
    p.to_csv(f)
    q = GridPath.from_csv(f)
    assert np.array_equal(q.values, p.values) and np.array_equal(q.times, p.times)
    s = GridPath(t, rng.normal(size=(8, 2)))
    s.to_csv(f)
    assert np.array_equal(GridPath.from_csv(f).values, s.values)


def test_l2_energy_of_cell_path():
    t = uniform_grid(2.0, 10)
    p = GridPath(t, np.full((10, 2), [1.0, 3.0]), "cell")
    assert np.isclose(l2_energy(p), 20.0)


def test_cache_roundtrip(tmp_path):
    cache = PathCache(tmp_path)
    t = uniform_grid(1.0, 5)
    p = GridPath(t, np.arange(6.0))
    assert cache.load(1, 0.7, t) is None
    cache.store(1, 0.7, p)
    assert np.array_equal(cache.load(1, 0.7, t).values, p.values)
    assert grid_hash(t) != grid_hash(uniform_grid(1.0, 6))


def test_substreams_reproducible_and_distinct():
    a = substream(5, STREAM_FBM, 3, 1).standard_normal(10)
    assert np.array_equal(a, substream(5, STREAM_FBM, 3, 1).standard_normal(10))
    others = [substream(5, STREAM_WIENER, 3, 1), substream(5, STREAM_FBM, 4, 1),
              substream(5, STREAM_FBM, 3, 2), substream(6, STREAM_FBM, 3, 1)]
    for g in others:
        assert not np.allclose(a, g.standard_normal(10))


def test_normals_order_independent():
    z = normals(9, STREAM_FBM, [0, 1, 2, 3], 0, 16)
    z2 = normals(9, STREAM_FBM, [3, 1], 0, 16)
    assert np.array_equal(z[3], z2[0]) and np.array_equal(z[1], z2[1])


def test_seed_env_override(monkeypatch):
    assert resolve_seed(4) == 4
    monkeypatch.setenv("MFBM_SEED", "17")
    assert resolve_seed(4) == 17
