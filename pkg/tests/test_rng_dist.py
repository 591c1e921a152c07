import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebfdr.rng_dist import (DomainError, NormalParams, RngStream, gen_ar1, norm_cdf, norm_pdf,
                            norm_quantile, norm_sf, sample_normal, sample_t_scaled, t_scale)

# frozen from mpmath at 40 digits
PDF_AT_ZERO = 0.3989422804014326779
CDF_AT_1_959964 = 0.9750000009035576
A8 = 2.8850194885337852  # Phi^{-1}(1 - 1/511)


def test_norm_pdf_values():
    assert norm_pdf(0.0) == pytest.approx(PDF_AT_ZERO, rel=1e-15)
    assert norm_pdf(0.7, NormalParams(0.7, 2.0)) == pytest.approx(1 / math.sqrt(2 * math.pi * 2.0))
    p = NormalParams(0.3, 2.0)
    assert norm_pdf(0.3 + 1.7, p) == pytest.approx(norm_pdf(0.3 - 1.7, p), rel=1e-15)
    assert norm_pdf(np.inf) == 0.0


@pytest.mark.parametrize("mu,var", [(math.nan, 1.0), (0.0, 0.0), (0.0, -1.0), (math.inf, 1.0)])
def test_normal_params_rejects_invalid(mu, var):
    with pytest.raises(DomainError):
        NormalParams(mu, var)


def test_norm_cdf_values():
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(np.inf) == 1.0
    assert norm_cdf(-np.inf) == 0.0
    assert norm_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
    assert norm_cdf(1.959964) == pytest.approx(CDF_AT_1_959964, abs=1e-12)
    with pytest.raises(DomainError):
        norm_cdf(math.nan)


def test_norm_cdf_against_mpmath_grid():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 30
    xs = np.linspace(-8, 8, 161)
    ref = np.array([float(mpmath.ncdf(x)) for x in xs])
    assert np.max(np.abs(norm_cdf(xs) - ref)) <= 1e-12


def test_norm_quantile_values():
    assert norm_quantile(0.5) == 0.0
    assert norm_quantile(0.0) == -np.inf
    assert norm_quantile(1.0) == np.inf
    assert norm_quantile(1 - 1 / 511) == pytest.approx(2.8856, abs=1e-3)
    assert norm_quantile(1 - 1 / 511) == pytest.approx(A8, abs=1e-9)
    for bad in (-0.1, 1.1, math.nan):
        with pytest.raises(DomainError):
            norm_quantile(bad)


@given(st.floats(1e-12, 1 - 1e-12))
def test_cdf_quantile_roundtrip(q):
    assert norm_cdf(norm_quantile(q)) == pytest.approx(q, abs=1e-9)


def test_cdf_quantile_roundtrip_tight_grid():
    q = np.concatenate((np.logspace(-15, -1, 60), np.linspace(0.1, 0.9, 41)))
    q = np.concatenate((q, 1 - q[q > 1e-15]))
    assert np.max(np.abs(norm_cdf(norm_quantile(q)) - q)) <= 1e-10


@given(st.floats(-40, 40))
def test_cdf_symmetry(x):
    assert norm_cdf(x) + norm_cdf(-x) == pytest.approx(1.0, abs=1e-12)
    assert norm_sf(x) == pytest.approx(norm_cdf(-x), abs=0, rel=0)


def test_sample_normal_reproducible_and_centred():
    p = NormalParams()
    a = sample_normal(RngStream(11, 3), p, 100)
    b = sample_normal(RngStream(11, 3), p, 100)
    assert np.array_equal(a, b)
    n = 100_000
    for mu in (0.0, 2.0):
        x = sample_normal(RngStream(5, 0), NormalParams(mu, 1.0), n)
        assert abs(x.mean() - mu) <= 4 / math.sqrt(n)
    with pytest.raises(DomainError):
        sample_normal(RngStream(1), p, 0)


def test_t_scaled():
    assert t_scale(25) == pytest.approx(0.9591663046625439, rel=1e-14)
    with pytest.raises(DomainError):
        t_scale(2)
    with pytest.raises(DomainError):
        sample_t_scaled(RngStream(1), 0.0, 2, 10)
    x = sample_t_scaled(RngStream(2), 0.0, 25, 100_000)
    assert abs(x.var() - 1.0) <= 0.05
    y = sample_t_scaled(RngStream(2), 2.0, 25, 100_000)
    assert np.allclose(y - 2.0, x)


def test_ar1_properties():
    with pytest.raises(DomainError):
        gen_ar1(RngStream(1), 0.0, 1.0, 10)
    n = 100_000
    x = gen_ar1(RngStream(4), 0.0, -0.5, n)
    r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r1 + 0.5) <= 0.02
    # coefficient 0 gives an IID N(mean, 1) stream
    z = gen_ar1(RngStream(4), 1.0, 0.0, n)
    assert abs(z.mean() - 1.0) <= 4 / math.sqrt(n)
    assert abs(np.corrcoef(z[:-1], z[1:])[0, 1]) <= 0.02


def test_ar1_recursion_matches_definition():
    g1 = RngStream(9).generator()
    x = gen_ar1(g1, 0.7, 0.5, 50)
    eps = RngStream(9).generator().standard_normal(50)
    ref = np.empty(50)
    ref[0] = 0.7 + eps[0]
    for t in range(1, 50):
        ref[t] = 0.7 + 0.5 * (ref[t - 1] - 0.7) + math.sqrt(0.75) * eps[t]
    assert np.allclose(x, ref, atol=1e-12)


@pytest.mark.parametrize("coeff", [-0.5, 0.0, 0.5])
def test_ar1_marginal_variance(coeff):
    v = [gen_ar1(RngStream(100, k), 0.0, coeff, 10_000).var() for k in range(50)]
    assert abs(np.mean(v) - 1.0) <= 0.02


def test_substream_independence():
    a = RngStream(7, 0).generator().standard_normal(10_000)
    b = RngStream(7, 1).generator().standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) <= 0.03
    assert not np.array_equal(RngStream(7, 0).generator(1).random(5), RngStream(7, 0).generator(2).random(5))


def test_rng_stream_validation():
    with pytest.raises(DomainError):
        RngStream(-1)
