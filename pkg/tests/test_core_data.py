import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsindy.core_data import (
    MAGIC,
    Dataset,
    NoiseSpec,
    add_noise,
    make_grid,
    read_dataset,
    stdev_all,
    subsample,
    write_dataset,
)
from wsindy.errors import FormatError, InvalidArgument


def test_make_grid_resolution():
    assert make_grid([(0, 10)], [11]).resolution == (1.0,)
    assert make_grid([(0, 1), (0, 2)], [3, 5]).resolution == (0.5, 0.5)


@pytest.mark.parametrize("extents,counts", [([(0, 1)], [1]), ([(1, 1)], [5]), ([(2, 1)], [5])])
def test_make_grid_rejects(extents, counts):
    with pytest.raises(InvalidArgument):
        make_grid(extents, counts)


def test_dataset_shape_and_kind_checks():
    g = make_grid([(0, 1)], [5])
    with pytest.raises(InvalidArgument):
        Dataset(g, np.zeros((4, 1)))
    with pytest.raises(InvalidArgument):
        Dataset(g, np.zeros((5, 1)), kind="clean", sigma=0.3)


def _series(n, dim=1):
    g = make_grid([(0.0, float(n - 1))], [n])
    return Dataset(g, np.arange(n * dim, dtype=float).reshape(n, dim))


def test_subsample_strides():
    ds = _series(11)
    sub = subsample(ds, 2)
    assert sub.grid.counts == (6,)
    np.testing.assert_array_equal(sub.values[:, 0], np.arange(0, 11, 2))
    assert sub.grid.extents[0] == (0.0, 10.0)
    assert subsample(ds, 1) == ds
    with pytest.raises(InvalidArgument):
        subsample(ds, 0)


def test_subsample_ladder_point_count():
    ds = _series(250_001)
    out = ds
    for _ in range(9):
        out = subsample(out, 2)
    assert out.grid.counts[0] == 489
    assert abs(out.grid.counts[0] - 250_000 / 2**9) < 2


def test_stdev_all_examples():
    g = make_grid([(0, 1)], [4])
    assert stdev_all(Dataset(g, np.full((4, 1), 3.0))) == 0.0
    assert stdev_all(Dataset(g, np.array([[-1.0], [1.0], [-1.0], [1.0]]))) == 1.0


@given(st.permutations([0, 1, 2]))
def test_stdev_all_axis_permutation(perm):
    vals = np.random.default_rng(0).normal(size=(4, 5, 3))
    assert stdev_all(vals) == pytest.approx(stdev_all(np.transpose(vals, perm)), rel=1e-13)


def test_add_noise_zero_level_and_determinism():
    ds = _series(50, 2)
    out = add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", 0.0, 7))
    np.testing.assert_array_equal(out.values, ds.values)
    assert out.kind == "noisy" and out.seed == 7
    a = add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", 0.5, 9))
    b = add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", 0.5, 9))
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(InvalidArgument):
        add_noise(a, NoiseSpec("gaussian", "absolute_sigma", 0.5, 9))
    with pytest.raises(InvalidArgument):
        NoiseSpec("gaussian", "absolute_sigma", -1.0)


def test_gaussian_noise_stdev():
    g = make_grid([(0, 1)], [1_000_000])
    ds = Dataset(g, np.zeros((1_000_000, 1)))
    out = add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", 1.0, 3))
    assert 0.995 <= out.values.std() <= 1.005


def test_noise_ratio_scales_with_stdev():
    ds = _series(1000)
    out = add_noise(ds, NoiseSpec("gaussian", "noise_ratio", 0.1, 1))
    assert out.sigma == pytest.approx(0.1 * stdev_all(ds))


def test_uniform_fourth_moment():
    g = make_grid([(0, 1)], [1_000_000])
    ds = Dataset(g, np.zeros((1_000_000, 1)))
    eps = add_noise(ds, NoiseSpec("uniform", "absolute_sigma", 2.0, 5)).values
    assert np.abs(eps).max() <= 2.0 * np.sqrt(3.0)
    m4 = np.mean(eps**4)
    assert m4 == pytest.approx(1.8 * 2.0**4, rel=0.05)


def test_noise_then_subsample_matches_in_distribution():
    g = make_grid([(0, 1)], [64])
    ds = Dataset(g, np.zeros((64, 1)))
    v1, v2 = [], []
    for s in range(300):
        v1.append(subsample(add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", 1.0, s)), 2).values)
        v2.append(add_noise(subsample(ds, 2), NoiseSpec("gaussian", "absolute_sigma", 1.0, 10_000 + s)).values)
    a, b = np.concatenate(v1).ravel(), np.concatenate(v2).ravel()
    # standard error of a sample variance of unit Gaussians is sqrt(2/n)
    se = np.sqrt(2.0 / a.size + 2.0 / b.size)
    assert abs(a.var() - b.var()) <= 3 * se


@settings(max_examples=25, deadline=None)
@given(
    counts=st.lists(st.integers(2, 6), min_size=1, max_size=3),
    state_dim=st.integers(1, 3),
    sigma=st.floats(0, 2),
    seed=st.integers(0, 2**63),
)
def test_wsd1_round_trip(tmp_path_factory, counts, state_dim, sigma, seed):
    g = make_grid([(0.0, 1.0 + q) for q in range(len(counts))], counts)
    vals = np.random.default_rng(seed % 1000).normal(size=tuple(counts) + (state_dim,))
    ds = Dataset(g, vals, meta={"system": "test"})
    if sigma > 0:
        ds = add_noise(ds, NoiseSpec("gaussian", "absolute_sigma", sigma, seed))
    path = tmp_path_factory.mktemp("wsd") / "d.wsd"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back == ds
    assert back.seed == ds.seed and back.sigma == ds.sigma and back.kind == ds.kind
    np.testing.assert_array_equal(back.values, ds.values)


def test_wsd1_layout(tmp_path):
    g = make_grid([(0.0, 1.0), (0.0, 2.0)], [2, 3])
    vals = np.arange(12, dtype=float).reshape(2, 3, 2)
    write_dataset(Dataset(g, vals), tmp_path / "a.wsd")
    raw = (tmp_path / "a.wsd").read_bytes()
    assert raw[:8] == MAGIC == b"WSDATA1\0"
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = raw[12 : 12 + hlen].decode()
    assert "counts=2,3" in header and "state_dim=2" in header
    payload = np.frombuffer(raw[12 + hlen :], dtype="<f8")
    np.testing.assert_array_equal(payload, np.arange(12.0))


def test_wsd1_errors(tmp_path):
    g = make_grid([(0.0, 1.0)], [4])
    path = tmp_path / "a.wsd"
    write_dataset(Dataset(g, np.ones((4, 1))), path)
    raw = path.read_bytes()
    (tmp_path / "trunc.wsd").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "trunc.wsd")
    (tmp_path / "magic.wsd").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "magic.wsd")
    bad = raw.replace(b"counts=4", b"counts=5")
    (tmp_path / "counts.wsd").write_bytes(bad)
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "counts.wsd")


def test_lorenz_stdev_scale(clean_data):
    assert stdev_all(clean_data("lorenz")) == pytest.approx(13.0, rel=0.10)
