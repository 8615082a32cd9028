import math

import numpy as np
import pytest

from dirac.core import (
    GaussianPrior,
    RandomSource,
    Signal,
    mse,
    prior_nll,
    prior_sample,
    psnr,
    read_signal,
    squared_exponential_prior,
    write_pgm,
    write_signal,
)


def test_signal_roundtrip_2d():
    arr = np.arange(12.0).reshape(3, 4)
    s = Signal.from_array(arr)
    assert s.shape == (3, 4)
    assert s.n == 12
    np.testing.assert_array_equal(s.as_array(), arr)


def test_signal_values_read_only():
    s = Signal.from_array(np.zeros(4))
    with pytest.raises(ValueError):
        s.values[0] = 1.0


def test_signal_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        Signal(np.zeros(5), (2, 3))


def test_prior_rejects_asymmetric_covariance():
    cov = np.eye(3)
    cov[0, 1] = 0.5
    with pytest.raises(ValueError):
        GaussianPrior(Signal.from_array(np.zeros(3)), cov)


def test_prior_rejects_indefinite_covariance():
    cov = np.diag([1.0, -0.1, 1.0])
    with pytest.raises(ValueError):
        GaussianPrior(Signal.from_array(np.zeros(3)), cov)


def test_squared_exponential_prior_structure():
    prior = squared_exponential_prior((4, 4), length_scale=2.0)
    assert prior.n == 16
    np.testing.assert_allclose(prior.mean.values, 0.5)
    # diagonal = 1 + jitter; adjacent horizontal pixels at distance 1
    np.testing.assert_allclose(np.diag(prior.covariance), 1.0 + 1e-4)
    expected = math.exp(-1.0 / (2.0 * 4.0))
    np.testing.assert_allclose(prior.covariance[0, 1], expected, rtol=1e-12)


def test_entry_bound_formula():
    prior = squared_exponential_prior((4,), mean_value=0.5)
    expected = 0.5 + 4.0 * math.sqrt(np.max(np.diag(prior.covariance)))
    assert prior.entry_bound == pytest.approx(expected)


def test_random_source_deterministic_and_split_independent():
    a = RandomSource(42).normal(8)
    b = RandomSource(42).normal(8)
    np.testing.assert_array_equal(a, b)
    c = RandomSource(42).split(0).normal(8)
    d = RandomSource(42).split(1).normal(8)
    assert not np.array_equal(c, d)
    # splitting is stable regardless of draw order on the parent
    src = RandomSource(42)
    src.normal(100)
    np.testing.assert_array_equal(src.split(0).normal(8), c)


def test_prior_sample_moments():
    prior = squared_exponential_prior((8, 8))
    rng = RandomSource(0)
    samples = np.array([prior_sample(prior, rng.split(i)).values for i in range(2000)])
    np.testing.assert_allclose(samples.mean(axis=0), prior.mean.values, atol=0.1)
    emp_cov = np.cov(samples.T)
    assert np.max(np.abs(emp_cov - prior.covariance)) < 0.15


def test_prior_nll_matches_direct_formula():
    prior = squared_exponential_prior((3, 3))
    x = prior_sample(prior, RandomSource(1))
    d = x.values - prior.mean.values
    cov = prior.covariance
    sign, logdet = np.linalg.slogdet(cov)
    expected = 0.5 * (d @ np.linalg.solve(cov, d) + logdet + prior.n * math.log(2 * math.pi))
    assert prior_nll(prior, x) == pytest.approx(expected, rel=1e-10)


def test_mse_psnr():
    a = Signal.from_array(np.zeros(4))
    b = Signal.from_array(np.full(4, 0.5))
    assert mse(a, b) == pytest.approx(0.25)
    assert psnr(a, b) == pytest.approx(10 * math.log10(1.0 / 0.25))
    assert psnr(a, a) == math.inf


def test_write_pgm(tmp_path):
    s = Signal.from_array(np.array([[0.0, 0.5], [1.0, 2.0]]))
    path = tmp_path / "img.pgm"
    write_pgm(s, path)
    data = path.read_bytes()
    assert data.startswith(b"P5")
    # values clipped to [0,1] then scaled to 255
    assert data[-4:] == bytes([0, 128, 255, 255])


def test_signal_file_roundtrip(tmp_path):
    s = Signal.from_array(RandomSource(3).normal((5, 7)))
    path = tmp_path / "sig.bin"
    write_signal(s, path)
    back = read_signal(path)
    assert back.shape == s.shape
    np.testing.assert_array_equal(back.values, s.values)


def test_read_signal_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 32)
    with pytest.raises(ValueError):
        read_signal(path)
