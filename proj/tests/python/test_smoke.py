"""Smoke tests for the Python extension module."""

import math
import pathlib

import numpy as np
import pytest

import uniconvnet as u

CONFIG_DIR = pathlib.Path(__file__).resolve().parents[2] / "configs"
TINY = (CONFIG_DIR / "tiny.json").read_text()


def test_kernel_schedule():
    assert [u.kernel_schedule(n) for n in (1, 2, 3)] == [7, 9, 11]
    with pytest.raises(u.UniconvError):
        u.kernel_schedule(0)


def test_theoretical_rf():
    rf = u.theoretical_rf([7, 9, 11])
    assert rf["amp_chain_rf"] == 25
    assert rf["dis_rf_per_layer"] == [7, 9, 11]
    assert u.theoretical_rf([27, 29, 31])["amp_chain_rf"] == 85


def test_gelu_matches_erf_formula():
    x = np.linspace(-3, 3, 13, dtype=np.float32).reshape(1, 1, 1, 13)
    y = u.gelu(x)
    expected = x * 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))
    np.testing.assert_allclose(y, expected, atol=1e-6)


def test_conv2d_delta_kernel_is_identity():
    rng = np.random.default_rng(1)
    x = rng.random((1, 2, 6, 6), dtype=np.float32)
    w = np.zeros((2, 1, 3, 3), dtype=np.float32)
    w[:, 0, 1, 1] = 1.0
    y = u.conv2d(x, w, stride=1, padding=1, groups=2)
    np.testing.assert_array_equal(y, x)


def test_layer_norm_constant_input_collapses():
    x = np.full((1, 4, 3, 3), 2.5, dtype=np.float32)
    gamma = np.ones((1, 4, 1, 1), dtype=np.float32)
    beta = np.zeros((1, 4, 1, 1), dtype=np.float32)
    y = u.layer_norm(x, gamma, beta)
    assert np.abs(y).max() < 1e-5


def test_model_forward_and_determinism():
    m1 = u.Model(TINY)
    m2 = u.Model(TINY)
    x = np.random.default_rng(0).random((2, 3, 64, 64)).astype(np.float32)
    a, b = m1.forward(x), m2.forward(x)
    assert a.shape == (2, 10, 1, 1)
    assert np.isfinite(a).all()
    np.testing.assert_array_equal(a, b)

    other = u.Model(TINY, seed=999)
    assert not np.array_equal(a, other.forward(x))


def test_model_rejects_bad_config():
    with pytest.raises(u.UniconvError):
        u.Model(TINY.replace("[8, 16, 24, 32]", "[10, 16, 24, 32]"))


def test_count_params_matches_parameter_list():
    m = u.Model(TINY)
    total = m.count_params()["total"]["params"]
    by_shapes = sum(int(np.prod(shape)) for _, shape in m.parameters())
    assert total == by_shapes


def test_count_flops_positive_and_scales():
    m = u.Model(TINY)
    small = m.count_flops(64, 64)["total"]["macs"]
    large = m.count_flops(128, 128)["total"]["macs"]
    assert 0 < small < large


def test_erf_grid_and_determinism():
    m = u.Model(TINY)
    a = m.compute_erf(samples=4, input_size=64)
    b = m.compute_erf(samples=4, input_size=64)
    assert a.shape == (64, 64)
    assert (a >= 0).all() and a.max() > 0
    np.testing.assert_array_equal(a, b)


def test_agd_metrics_on_synthetic_gaussian():
    h = w = 101
    yy, xx = np.mgrid[0:h, 0:w]
    grid = np.exp(-((yy - 50.0) ** 2 + (xx - 50.0) ** 2) / (2.0 * 10.0**2))
    metrics = u.agd_metrics(grid)
    assert abs(metrics["gauss_sigma"] - 10.0) < 0.1
    assert metrics["gauss_r2"] > 0.999
    assert metrics["monotonicity_violation"] < 1e-9


def test_weights_round_trip(tmp_path):
    m = u.Model(TINY)
    path = str(tmp_path / "weights.ucnw")
    m.save_weights(path)
    other = u.Model(TINY, seed=4242)
    other.load_weights(path)
    x = np.random.default_rng(3).random((1, 3, 64, 64)).astype(np.float32)
    np.testing.assert_array_equal(m.forward(x), other.forward(x))


def test_run_overfit_short_run_descends():
    losses = u.run_overfit(TINY, steps=25, lr=0.05, samples=8, input_size=32)
    assert len(losses) == 26
    assert losses[-1] < losses[0]
