import math

import numpy as np
import pytest

import pspc


def pixel_dataset(values):
    return pspc.Dataset(np.asarray(values, dtype=float).reshape(-1, 1, 1, 1))


def random_dataset(n=5, h=4, w=4, c=1, seed=0):
    rng = np.random.default_rng(seed)
    return pspc.Dataset(rng.uniform(-1, 1, size=(n, h, w, c)))


def test_optimal_denoiser_closed_form():
    ds = pixel_dataset([-1.0, 0.0, 1.0])
    norm = 1 + math.exp(-0.5) + math.exp(-2)
    x = pspc.optimal_denoise(ds, np.array([1.0]), 1.0)
    assert x.shape == (1, 1, 1)
    assert x[0, 0, 0] == pytest.approx((1 - math.exp(-2)) / norm, abs=1e-14)
    w = pspc.posterior_weights(ds, np.array([1.0]), 1.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert abs(pspc.optimal_denoise(ds, np.array([0.0]), 1.0)[0, 0, 0]) < 1e-15


def test_full_patch_matches_global():
    ds = random_dataset(6, 4, 4, 3, seed=1)
    z = np.random.default_rng(2).normal(size=(4, 4, 3))
    a = pspc.pspc_square(ds, z, 0.5, 4)
    b = pspc.optimal_denoise(ds, z, 0.5)
    assert np.array_equal(a, b)


def test_delta_flex_is_pixelwise():
    ds = random_dataset(4, 3, 3, 1, seed=3)
    z = np.random.default_rng(4).normal(size=(3, 3, 1))
    delta = np.eye(9).reshape(3, 3, 3, 3)
    assert np.array_equal(pspc.pspc_flex(ds, z, 0.4, delta, 0.5), pspc.pspc_square(ds, z, 0.4, 1))


def test_flex_crop_example():
    assert pspc.flex_crop(np.array([[0.4, 0.3], [0.2, 0.1]]), 0.5) == [(0, 0), (0, 1)]
    with pytest.raises(pspc.DegenerateHeatmap):
        pspc.flex_crop(np.zeros((2, 2)), 0.5)


def test_sampling_reproduces_single_image():
    ds = random_dataset(1, 4, 4, 3, seed=5)
    opt = pspc.make_denoiser("optimal", ds)
    ts = pspc.edm_schedule(18)
    assert ts[0] == 80.0 and ts[-1] == 0.0 and len(ts) == 19
    z = pspc.sample_prior(ds, 1, seed=6)[0]
    for solver in ("euler", "heun"):
        out = pspc.sample(opt, ts, z, solver)
        assert np.max(np.abs(out["final"] - ds.images()[0])) < 1e-9
    traj = pspc.sample(opt, ts, z, "heun", capture=True)
    assert traj["denoiser_calls"] == 2 * (18 - 1) + 1
    assert traj["z"].shape == (19, 4, 4, 3)


def test_sensitivity_and_concentration():
    ds = random_dataset(5, 4, 4, 1, seed=7)
    opt = pspc.make_denoiser("optimal", ds)
    maps = pspc.sensitivity_map(opt, ds, 1.0, 4, seed=8)
    assert maps.shape == (4, 4, 4, 4)
    assert (maps >= 0).all()
    assert pspc.concentration_side_length(np.ones((5, 5)), 2, 2, 0.95) == 5


def test_tensor_round_trip(tmp_path):
    a = np.random.default_rng(9).normal(size=(3, 2, 5))
    path = str(tmp_path / "a.tensor")
    pspc.write_tensor(path, a)
    assert np.array_equal(pspc.read_tensor(path), a)


def test_errors_are_typed():
    ds = random_dataset()
    with pytest.raises(pspc.ConfigError):
        pspc.make_denoiser("nonsense", ds)
    with pytest.raises(pspc.DomainError):
        pspc.optimal_denoise(ds, np.zeros(16), 0.0)
    with pytest.raises(pspc.ShapeMismatch):
        pspc.optimal_denoise(ds, np.zeros(3), 1.0)
    assert issubclass(pspc.ConfigError, pspc.PspcError)
