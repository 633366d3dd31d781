import math

import numpy as np
import pytest

from tecusum import GaussianMeanShiftModel, amplitude_for_snr, llr, snr_db


def gauss_logpdf(x, mu, sigma):
    return -0.5 * math.log(2 * math.pi * sigma**2) - (x - mu) ** 2 / (2 * sigma**2)


def test_llr_zero_at_midpoint():
    assert llr(GaussianMeanShiftModel(0.0, 0.4, 1.0), 0.2) == pytest.approx(0.0, abs=1e-15)


def test_llr_hand_value():
    assert llr(GaussianMeanShiftModel(0.0, 0.4, 1.0), 0.4) == pytest.approx(0.08, abs=1e-15)


def test_llr_matches_log_density_difference():
    m = GaussianMeanShiftModel(0.0, 0.1, 1.0)
    expected = gauss_logpdf(-0.3, 0.1, 1.0) - gauss_logpdf(-0.3, 0.0, 1.0)
    assert llr(m, -0.3) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("mu0,mu1,sigma", [(0.0, 0.4, 1.0), (1.5, -0.7, 2.3), (-3.0, -2.9, 0.4)])
def test_llr_grid_against_densities(mu0, mu1, sigma):
    m = GaussianMeanShiftModel(mu0, mu1, sigma)
    xs = np.linspace(mu0 - 6 * sigma, mu0 + 6 * sigma, 1000)
    ours = m.llr_array(xs)
    ref = np.array([gauss_logpdf(x, mu1, sigma) - gauss_logpdf(x, mu0, sigma) for x in xs])
    np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-12)


def test_llr_antisymmetric_about_midpoint():
    m = GaussianMeanShiftModel(0.3, 1.1, 0.7)
    mid = m.mu0 + m.delta / 2
    for u in np.linspace(-5, 5, 41):
        assert m.llr(mid + u) == pytest.approx(-m.llr(mid - u), abs=1e-12)


def test_scalar_and_array_paths_agree_bitwise():
    m = GaussianMeanShiftModel(0.1, 0.5, 1.3)
    xs = np.random.default_rng(0).normal(size=200)
    assert np.array_equal(m.llr_array(xs), np.array([m.llr(x) for x in xs]))


def test_expected_increment_empirical():
    m = GaussianMeanShiftModel(0.0, 0.4, 1.0)
    rng = np.random.default_rng(1)
    for post, mean in ((False, m.mu0), (True, m.mu1)):
        incs = m.llr_array(rng.normal(mean, m.sigma, 1_000_000))
        se = incs.std() / math.sqrt(len(incs))
        assert abs(incs.mean() - m.expected_increment(post)) < 3 * se
    assert m.expected_increment(True) == pytest.approx(0.08)
    assert m.expected_increment(False) == pytest.approx(-0.08)


def test_snr_values():
    m = GaussianMeanShiftModel()
    assert snr_db(m, 0.4) == pytest.approx(-7.96, abs=0.01)
    assert snr_db(m, 0.2) == pytest.approx(-13.98, abs=0.01)
    assert snr_db(m, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert amplitude_for_snr(snr_db(m, 0.4)) == pytest.approx(0.4)


def test_snr_zero_amplitude_rejected():
    with pytest.raises(ValueError):
        snr_db(GaussianMeanShiftModel(), 0.0)


@pytest.mark.parametrize("kwargs", [dict(sigma=0.0), dict(sigma=-1.0), dict(mu1=0.0), dict(mu0=math.nan), dict(mu1=math.inf)])
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ValueError):
        GaussianMeanShiftModel(**kwargs)


def test_non_finite_sample_rejected():
    m = GaussianMeanShiftModel()
    for x in (math.nan, math.inf):
        with pytest.raises(ValueError):
            m.llr(x)


def test_model_is_immutable_and_hashable():
    m = GaussianMeanShiftModel()
    with pytest.raises(AttributeError):
        m.mu1 = 3.0  # type: ignore[misc]
    assert hash(m) == hash(GaussianMeanShiftModel())
