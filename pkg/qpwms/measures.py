"""Statistics of sampled signals and noise realizations."""

from typing import Tuple

import numpy as np
import scipy.signal


def rms(signal: np.ndarray) -> float:
    signal = np.asarray(signal, dtype=float)
    return float(np.sqrt(np.mean(signal**2)))


def snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """Signal-to-noise ratio of `noisy` against its noise-free version."""
    noise = np.asarray(noisy) - np.asarray(clean)
    return 20 * np.log10(rms(clean) / rms(noise))


def psd_slope(
    signal: np.ndarray,
    f_d: float,
    band: Tuple[float, float],
) -> float:
    """Estimate the exponent of a power-law power spectral density.

    Fit the periodogram in log space, i.e. fit
        log(psd(f)) = slope log(f) + offset
    over the frequency `band`.

    Returns
    -------
    slope
        -1 for pink noise, 0 for white noise.
    """
    frequencies, psd = scipy.signal.periodogram(signal, fs=f_d)
    f_low, f_high = band
    mask_band = (frequencies >= f_low) & (frequencies <= f_high) & (psd > 0)
    assert np.count_nonzero(mask_band) > 2, "band too narrow"
    coeffs = np.polyfit(np.log(frequencies[mask_band]),
                        np.log(psd[mask_band]), 1)
    return coeffs[0]


def band_power_fraction(signal: np.ndarray, f_d: float,
                        f_above: float) -> float:
    """Fraction of the signal power above frequency `f_above`."""
    frequencies, psd = scipy.signal.periodogram(signal, fs=f_d)
    total = np.sum(psd)
    return float(np.sum(psd[frequencies > f_above]) / total)
