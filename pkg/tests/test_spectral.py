import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causaltwin.graph import CouplingSet
from causaltwin.spectral import band_power_ratio, collapse_spectrum, spectral_similarity, spectrogram
from causaltwin.svar import NoiseSpec, generate_series

from conftest import graph_from_values


def test_zero_signal():
    tfd = spectrogram(np.zeros(1024))
    assert not tfd.power.any()


def test_shape_and_axes():
    tfd = spectrogram(np.random.default_rng(0).normal(size=1000), 128, 64, 256, "hann", sample_rate=1000.0)
    assert tfd.power.shape == (14, 129)
    assert np.all(np.diff(tfd.time_axis) > 0) and np.all(np.diff(tfd.freq_axis) > 0)
    assert tfd.freq_axis[-1] == pytest.approx(500.0)


@pytest.mark.parametrize("bin_index", [5, 32, 100])
def test_sinusoid_peak_in_its_bin(bin_index):
    nfft = 256
    n = np.arange(4096)
    x = np.sin(2 * np.pi * bin_index / nfft * n + 0.3)
    tfd = spectrogram(x, nfft, nfft // 2, nfft, "rect")
    assert np.all(np.argmax(tfd.power, axis=1) == bin_index)


def test_parseval_rectangular_non_overlapping():
    x = np.random.default_rng(1).normal(size=256 * 20)
    tfd = spectrogram(x, 256, 256, 256, "rect")
    assert tfd.power.sum() == pytest.approx(np.sum(x**2), rel=0.01)


def test_errors():
    with pytest.raises(ValueError):
        spectrogram(np.zeros(100), 256, 128, 256)
    with pytest.raises(ValueError):
        spectrogram(np.zeros(1000), 256, 0, 256)
    with pytest.raises(ValueError):
        spectrogram(np.zeros(1000), 256, 128, 128)


def test_time_reversal_keeps_collapsed_spectrum():
    x = np.random.default_rng(2).normal(size=256 * 16)
    # periodic Hann is not mirror-symmetric, so use the rectangular window
    a = collapse_spectrum(spectrogram(x, 256, 256, 256, "rect"))
    b = collapse_spectrum(spectrogram(x[::-1], 256, 256, 256, "rect"))
    np.testing.assert_allclose(a, b, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-100, 100, allow_nan=False))
def test_power_scales_quadratically_and_stays_non_negative(seed, alpha):
    x = np.random.default_rng(seed).normal(size=600)
    p = spectrogram(x, 128, 64, 128).power
    q = spectrogram(alpha * x, 128, 64, 128).power
    assert np.all(q >= 0)
    np.testing.assert_allclose(q, alpha**2 * p, rtol=1e-9, atol=1e-300)


def test_white_noise_collapses_flat():
    x = np.random.default_rng(3).normal(size=200_000)
    spec = collapse_spectrum(spectrogram(x))
    interior = spec[1:-1]
    assert interior.max() / interior.min() < 1.5


def test_single_slice_collapse_is_that_slice():
    tfd = spectrogram(np.random.default_rng(4).normal(size=256))
    assert tfd.power.shape[0] == 1
    assert np.array_equal(collapse_spectrum(tfd), tfd.power[0])


def test_collapse_is_linear():
    tfd = spectrogram(np.random.default_rng(5).normal(size=2000))
    from dataclasses import replace

    scaled = replace(tfd, power=3.5 * tfd.power)
    np.testing.assert_allclose(collapse_spectrum(scaled), 3.5 * collapse_spectrum(tfd))


# -- band ratio -------------------------------------------------------------


def test_band_ratio_extremes():
    f = np.linspace(0, 0.5, 11)
    low = np.where(f <= 0.2, 1.0, 0.0)
    assert band_power_ratio(low, f, 0.2) == 0.0
    assert band_power_ratio(1.0 - low, f, 0.2) == 1.0


def test_two_tone_ratio_is_half():
    n = np.arange(1 << 15)
    x = np.sin(2 * np.pi * 0.05 * n) + np.sin(2 * np.pi * 0.3 * n + 1.0)
    tfd = spectrogram(x)
    assert band_power_ratio(collapse_spectrum(tfd), tfd.freq_axis, 0.15) == pytest.approx(0.5, abs=0.02)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=5, max_size=40), st.floats(0, 0.49))
def test_band_ratio_in_unit_interval(values, split):
    spec = np.array(values)
    f = np.linspace(0, 0.5, spec.size)
    if spec.sum() == 0 or split >= f[-1] or (f > split).all():
        return
    r = band_power_ratio(spec, f, split)
    assert 0.0 <= r <= 1.0


def test_band_ratio_errors():
    f = np.linspace(0, 0.5, 5)
    with pytest.raises(ValueError):
        band_power_ratio(np.ones(5), f, 0.6)
    with pytest.raises(ValueError):
        band_power_ratio(np.zeros(5), f, 0.2)


# -- similarity -------------------------------------------------------------


def test_identical_spectra_similarity_one():
    s = np.random.default_rng(6).uniform(0.1, 10, 64)
    assert spectral_similarity(s, s) == pytest.approx(1.0)


def test_mirrored_spectrum_less_similar():
    s = np.linspace(1, 100, 64)
    assert spectral_similarity(s, s[::-1]) < 1.0


def test_constant_spectrum_rejected():
    with pytest.raises(ValueError):
        spectral_similarity(np.ones(10), np.arange(1, 11.0))


def test_same_process_more_similar_than_different_process():
    values = {(1, 0, 1): 0.8, (0, 1, 1): 0.6}
    graph = graph_from_values(values, node_count=2)
    k_a = CouplingSet.from_edges(graph, values)
    k_b = CouplingSet.from_edges(graph, {(1, 0, 1): -0.8, (0, 1, 1): 0.6})

    def spec(k, seed):
        s = generate_series(graph, k, NoiseSpec("laplace", 1.0, seed=seed), 20000)
        return collapse_spectrum(spectrogram(s.channel(0)))

    same = spectral_similarity(spec(k_a, 1), spec(k_a, 2))
    other = spectral_similarity(spec(k_a, 1), spec(k_b, 3))
    assert same > other
