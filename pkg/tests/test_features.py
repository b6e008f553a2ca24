import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acl.errors import DataError, DegenerateFunctionError, DimensionError
from acl.features import (
    FeatureMap,
    FrequencySampler,
    apply_map,
    contribution_bits,
    kernel_scale_preset,
    make_feature_map,
    sample_dither,
    sample_frequencies,
)
from acl.periodic import PeriodicFunction


def test_frequencies_deterministic():
    s = FrequencySampler("gaussian", 1.0, 3)
    a = sample_frequencies(s, 5, 7)
    assert a.shape == (3, 5)
    assert np.array_equal(a, sample_frequencies(s, 5, 7))
    assert not np.array_equal(a, sample_frequencies(s, 5, 8))


def test_frequencies_vanish_with_scale():
    s = FrequencySampler("gaussian", 1e-20, 4)
    assert np.max(np.abs(sample_frequencies(s, 50, 0))) < 1e-8


def test_gaussian_projection_mean():
    # folded-normal mean oracle: E|N(0,1)| = sqrt(2/π)
    s = FrequencySampler("gaussian", 1.0, 2)
    om = sample_frequencies(s, 100_000, 11)
    a = np.array([0.6, -0.8])
    assert np.mean(np.abs(a @ om)) == pytest.approx(math.sqrt(2 / math.pi), abs=0.01)


def test_folded_gaussian_matches_second_moment_and_favours_low_frequencies():
    d, s2 = 5, 3.0
    g = sample_frequencies(FrequencySampler("gaussian", s2, d), 200_000, 0)
    f = sample_frequencies(FrequencySampler("folded_gaussian", s2, d), 200_000, 0)
    rg, rf = np.linalg.norm(g, axis=0), np.linalg.norm(f, axis=0)
    assert np.mean(rf**2) == pytest.approx(d * s2, rel=0.02)
    assert np.mean(rg**2) == pytest.approx(d * s2, rel=0.02)
    r0 = 0.5 * math.sqrt(d * s2)
    assert np.mean(rf < r0) > 2 * np.mean(rg < r0)
    # isotropic directions
    u = f / rf
    assert np.max(np.abs(u.mean(axis=1))) < 0.01


def test_sampler_validation():
    with pytest.raises(ValueError):
        FrequencySampler("gaussian", 0.0, 2)
    with pytest.raises(ValueError):
        FrequencySampler("cauchy", 1.0, 2)
    with pytest.raises(ValueError):
        sample_frequencies(FrequencySampler("gaussian", 1.0, 2), 0, 0)


def test_kernel_scale_presets():
    assert kernel_scale_preset("kmeans", 5) == pytest.approx(1 / 50)
    assert kernel_scale_preset("gmm", 5) == pytest.approx(1 / 500)
    s = FrequencySampler.from_kernel_scale("gaussian", kernel_scale_preset("kmeans", 5), 5)
    assert s.sigma2 == pytest.approx(50)


def test_dither():
    assert np.array_equal(sample_dither(4, 1), sample_dither(4, 1))
    xi = sample_dither(100_000, 3)
    assert np.all((xi >= 0) & (xi < 2 * np.pi))
    assert xi.mean() == pytest.approx(np.pi, abs=0.02)
    one = sample_dither(1, 42)
    assert one.shape == (1,) and 0 <= one[0] < 2 * np.pi


def make(kind="exp", d=3, m=40, renormalize=False, dither_seed=1):
    return make_feature_map(FrequencySampler("gaussian", 2.0, d), m, kind, omega_seed=0,
                            dither_seed=dither_seed, renormalize=renormalize)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_rff_unit_norm(x):
    assert np.linalg.norm(apply_map(make(), np.array(x))) == pytest.approx(1.0, abs=1e-12)


def test_quantized_entries():
    fm = make("quantized", m=25)
    v = apply_map(fm, np.random.default_rng(0).normal(size=(50, 3))) * math.sqrt(25)
    assert set(np.unique(v.real)) <= {-1.0, 1.0}
    assert set(np.unique(v.imag)) <= {-1.0, 1.0}


def test_trivial_map():
    fm = FeatureMap(np.array([[1.0]]), np.array([0.0]))
    assert np.array_equal(apply_map(fm, np.array([0.0])), np.array([1 + 0j]))


def test_quantized_is_sign_of_rff():
    rff = make()
    q = rff.with_nonlinearity("quantized")
    X = np.random.default_rng(2).normal(size=(30, 3))
    s = math.sqrt(rff.m)
    expected = (np.where((s * apply_map(rff, X)).real >= 0, 1, -1)
                + 1j * np.where((s * apply_map(rff, X)).imag >= 0, 1, -1)) / s
    assert np.allclose(apply_map(q, X), expected)


def test_dither_integer_shifts():
    fm = make("modulo")
    x = np.array([0.3, -0.2, 0.9])
    k = np.random.default_rng(0).integers(-5, 6, fm.m)
    base = fm.nonlinearity(fm.omega.T @ x + fm.dither)
    shifted = fm.nonlinearity(fm.omega.T @ x + fm.dither + 2 * np.pi * k)
    assert np.allclose(base, shifted, atol=1e-9)


def test_renormalized_scale():
    raw = make("quantized")
    ren = make("quantized", renormalize=True)
    x = np.ones(3)
    assert np.allclose(apply_map(ren, x), apply_map(raw, x) / (4 / np.pi))


def test_renormalize_degenerate():
    t = 2 * np.pi * np.arange(4096) / 4096
    f = PeriodicFunction.tabulated(np.exp(3j * t))
    with pytest.raises(DegenerateFunctionError):
        make().with_nonlinearity(f, renormalize=True)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_map(make(), np.ones(2))


def test_dither_range_enforced():
    with pytest.raises(DataError):
        FeatureMap(np.ones((1, 2)), np.array([0.0, 2 * np.pi]))
    with pytest.raises(DimensionError):
        FeatureMap(np.ones((1, 2)), np.array([0.0]))


def test_contribution_bits():
    assert contribution_bits(make("quantized", m=100)) == 200
    assert contribution_bits(make("exp", m=100), 64) == 12800
    assert contribution_bits(make("modulo", m=1), 32) == 64
    with pytest.raises(ValueError):
        contribution_bits(make(), 16)


def test_json_roundtrip_regenerates_draws():
    fm = make("modulo", renormalize=True)
    back = FeatureMap.from_json(fm.to_json())
    assert back.map_hash == fm.map_hash
    assert back.shares_draws_with(fm)
    assert set(fm.to_json()) == {"d", "m", "law", "sigma2", "omega_seed", "dither_seed",
                                 "nonlinearity", "renormalize"}


def test_zero_dither_option():
    fm = make(dither_seed=None)
    assert np.all(fm.dither == 0)


def test_hash_distinguishes_maps():
    assert make().map_hash != make("quantized").map_hash
    assert make("quantized").map_hash != make("quantized", renormalize=True).map_hash
    assert make().map_hash != make(dither_seed=2).map_hash


def test_jacobian_matches_finite_difference():
    fm = make()
    x = np.array([0.1, 0.2, -0.3])
    J = fm.jacobian(x)
    h = 1e-6
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        fd = (apply_map(fm, x + e) - apply_map(fm, x - e)) / (2 * h)
        assert np.allclose(J[l], fd, atol=1e-8)
