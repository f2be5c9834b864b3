"""Short-time periodogram TFDs and spectrum comparison metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TfdMatrix:
    """Power per (time slice, frequency bin), one-sided."""

    power: np.ndarray
    time_axis: np.ndarray
    freq_axis: np.ndarray
    window_len: int
    hop: int
    nfft: int
    window: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.power.shape


def _window(kind: str, length: int) -> np.ndarray:
    if kind in ("rect", "rectangular", "boxcar"):
        return np.ones(length)
    if kind == "hann":
        # periodic Hann, the usual choice for spectral analysis
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(length) / length)
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(length) / length)
    raise ValueError(f"unknown window {kind!r}")


def spectrogram(
    x,
    window_len: int = 256,
    hop: int = 128,
    nfft: int = 256,
    window: str = "hann",
    sample_rate: float | None = None,
) -> TfdMatrix:
    """Magnitude-squared STFT normalized by window power.

    With ``nfft == window_len`` each slice sums to
    ``sum((w * frame)**2) / mean(w**2)``,
    so with a rectangular window and ``hop == window_len`` the total over
    all slices equals the energy of the covered samples. Interior bins are
    doubled to fold in the negative frequencies. Without ``sample_rate``
    the axes are in samples and cycles per sample.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("spectrogram takes a single channel")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if window_len > nfft:
        raise ValueError("window_len must not exceed nfft")
    if x.size < window_len or x.size < nfft:
        raise ValueError(f"series of {x.size} samples is shorter than one window")
    fs = 1.0 if sample_rate is None else float(sample_rate)
    w = _window(window, window_len)
    frames = sliding_window_view(x, window_len)[::hop]
    spec = np.fft.rfft(frames * w, n=nfft, axis=1)
    power = (spec.real**2 + spec.imag**2) / (w @ w)
    if nfft % 2 == 0:
        power[:, 1:-1] *= 2.0
    else:
        power[:, 1:] *= 2.0
    starts = np.arange(frames.shape[0]) * hop
    time_axis = (starts + window_len / 2.0) / fs
    freq_axis = np.arange(power.shape[1]) * fs / nfft
    return TfdMatrix(power, time_axis, freq_axis, window_len, hop, nfft, window)


def collapse_spectrum(tfd: TfdMatrix) -> np.ndarray:
    """Mean over time slices: a Welch-style averaged power spectrum."""
    return tfd.power.mean(axis=0)


def band_power_ratio(spectrum, freq_axis, split_freq: float) -> float:
    """Fraction of power in bins strictly above ``split_freq``."""
    spectrum = np.asarray(spectrum, dtype=float)
    freq_axis = np.asarray(freq_axis, dtype=float)
    if spectrum.shape != freq_axis.shape:
        raise ValueError("spectrum and frequency axis differ in length")
    if not freq_axis[0] <= split_freq < freq_axis[-1]:
        raise ValueError(f"split frequency {split_freq} outside [{freq_axis[0]}, {freq_axis[-1]})")
    high = freq_axis > split_freq
    if not high.any() or high.all():
        raise ValueError("empty band")
    upper = spectrum[high].sum()
    # summing the two bands separately keeps the ratio inside [0, 1]
    total = upper + spectrum[~high].sum()
    if total <= 0:
        raise ValueError("spectrum has no power")
    return float(upper / total)


def spectral_similarity(spec_a, spec_b) -> float:
    """Pearson correlation of floored log-power spectra."""
    a = np.log10(np.maximum(np.asarray(spec_a, dtype=float), LOG_FLOOR))
    b = np.log10(np.maximum(np.asarray(spec_b, dtype=float), LOG_FLOOR))
    if a.shape != b.shape:
        raise ValueError("spectra differ in length")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("constant spectrum")
    return float(np.corrcoef(a, b)[0, 1])
