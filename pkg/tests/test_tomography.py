import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnewton.tomography import TomographyConfig, sample_linf, shots_for


def unit(n, seed):
    v = np.random.default_rng(seed).standard_normal(n)
    return v / np.linalg.norm(v)


def test_shots_formula():
    cfg = TomographyConfig(0.1)
    assert shots_for(256, cfg) == math.ceil(36 * math.log(256) / 0.01)
    assert shots_for(2, TomographyConfig(1.0, shot_constant=1.0)) == 1
    with pytest.raises(ValueError):
        shots_for(1, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        TomographyConfig(0.0)
    with pytest.raises(ValueError):
        TomographyConfig(0.1, sign_mode="guess")
    with pytest.raises(ValueError):
        TomographyConfig(0.1, channel="noisy")
    with pytest.raises(ValueError):
        TomographyConfig(0.1, shot_constant=-1)


def test_rejects_non_unit_and_zero():
    cfg = TomographyConfig(0.1)
    with pytest.raises(ValueError):
        sample_linf([1.0, 1.0], cfg)
    with pytest.raises(ValueError):
        sample_linf([0.0, 0.0], cfg)


def test_basis_vector_is_exact():
    v = np.zeros(64)
    v[17] = -1.0
    out = sample_linf(v, TomographyConfig(0.1))
    np.testing.assert_array_equal(out.values, v)
    assert out.support_size == 1


def test_uniform_vector_error_small():
    n = 1024
    v = np.full(n, 1 / math.sqrt(n))
    out = sample_linf(v, TomographyConfig(0.05))
    assert np.abs(out.values - v).max() <= 0.05


def test_seed_reproducible_and_distinct():
    v = unit(300, 0)
    cfg = TomographyConfig(0.1, rng_seed=7)
    a = sample_linf(v, cfg)
    b = sample_linf(v, cfg)
    c = sample_linf(v, TomographyConfig(0.1, rng_seed=8))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_explicit_generator_overrides_seed():
    v = unit(50, 1)
    cfg = TomographyConfig(0.2, rng_seed=0)
    a = sample_linf(v, cfg, np.random.default_rng(3))
    b = sample_linf(v, TomographyConfig(0.2, rng_seed=99), np.random.default_rng(3))
    np.testing.assert_array_equal(a.values, b.values)


def test_identity_channel_passthrough():
    v = unit(40, 2)
    out = sample_linf(v, TomographyConfig(0.3, channel="identity"))
    np.testing.assert_array_equal(out.values, v)
    assert out.shots == 0


def test_clip_channel():
    v = np.array([0.9, 0.3, 0.05, -0.3])
    v /= np.linalg.norm(v)
    out = sample_linf(v, TomographyConfig(0.1, channel="clip"))
    assert out.values[2] == 0.0
    assert np.linalg.norm(out.values) == pytest.approx(1.0)
    assert np.all(np.sign(out.values[[0, 1, 3]]) == np.sign(v[[0, 1, 3]]))


def test_exact_sign_preserved():
    v = unit(200, 3)
    out = sample_linf(v, TomographyConfig(0.1))
    nz = out.values != 0
    assert np.all(np.sign(out.values[nz]) == np.sign(v[nz]))


def test_two_pass_only_flips_weak_components():
    v = unit(2000, 4)
    cfg = TomographyConfig(0.1, sign_mode="two-pass", rng_seed=1)
    flipped = 0
    for seed in range(20):
        out = sample_linf(v, cfg, np.random.default_rng(seed))
        wrong = (out.values != 0) & (np.sign(out.values) != np.sign(v))
        assert np.all(np.abs(v[wrong]) < 0.1)
        flipped += int(wrong.sum())
    assert flipped > 0


def test_empirical_mean_of_squares():
    # E[n_i / M] = v_i^2; averaged counts converge to the state probabilities
    v = np.array([0.8, 0.6])
    cfg = TomographyConfig(0.5, shot_constant=1.0)
    rng = np.random.default_rng(0)
    sq = np.mean([sample_linf(v, cfg, rng).values ** 2 for _ in range(4000)], axis=0)
    np.testing.assert_allclose(sq, v**2, atol=0.01)


@pytest.mark.parametrize("n", [256, 4096])
@pytest.mark.parametrize("eps_s", [0.1, 0.05])
def test_concentration(n, eps_s):
    cfg = TomographyConfig(eps_s)
    M = shots_for(n, cfg)
    v = unit(n, n)
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(200):
        out = sample_linf(v, cfg, rng)
        assert out.support_size < M
        hits += np.abs(out.values - v).max() <= eps_s
    assert hits >= 190


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 2**32 - 1), eps_s=st.floats(0.05, 0.8))
def test_output_is_unit_with_bounded_support(n, seed, eps_s):
    v = unit(n, seed)
    cfg = TomographyConfig(eps_s)
    out = sample_linf(v, cfg, np.random.default_rng(seed))
    assert np.linalg.norm(out.values) == pytest.approx(1.0, rel=1e-12)
    assert out.support_size == out.support.size <= min(n, shots_for(n, cfg))
    assert set(out.support.tolist()) <= set(np.flatnonzero(v).tolist())
