"""Additive noise sources contaminating the transmitted intensity.

Three zero-mean Gaussian sources are applied in sequence: low-frequency
environmental noise picked up during beam propagation, then pink (1/f) and
white noise introduced at detection and digitization. Each is scaled to a
signal-to-noise ratio relative to the RMS of the clean transmission.
"""

import dataclasses
import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

import qpwms.measures
from qpwms.spectroscopy import SampledWaveform


logger = logging.getLogger(__name__)


Seed = Union[int, np.random.SeedSequence, None]

KINDS = ("environmental", "pink", "white")


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """One noise source.

    kind : {"environmental", "pink", "white"}
    snr_db : Ratio of the clean signal RMS to the noise RMS (dB).
    cutoff_hz : Upper band edge of environmental noise (Hz).
    seed : Seed of the noise realization.
    """

    kind: str
    snr_db: float
    cutoff_hz: float = 1000.0
    seed: Seed = 0

    def violations(self) -> List[str]:
        violations = []
        if self.kind not in KINDS:
            violations.append(f"kind: invalid noise kind {self.kind}")
        if not math.isfinite(self.snr_db):
            violations.append("snr_db: must be finite")
        if self.kind == "environmental" and not self.cutoff_hz > 0:
            violations.append("cutoff_hz: must be positive")
        return violations


def derive_seed(seed: Seed, *keys: int) -> np.random.SeedSequence:
    """Derive an independent seed, e.g. per run, beam or noise stage.

    Sub-seeds are children of `seed` in the `numpy.random.SeedSequence`
    spawn tree, addressed by `keys`.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy,
                                      spawn_key=seed.spawn_key + keys)
    return np.random.SeedSequence(seed, spawn_key=keys)


def split_snr_db(total_db: float, fraction: float = 0.5) -> float:
    """SNR of one of two independent sources sharing a combined SNR.

    Parameters
    ----------
    total_db :
        SNR of the combined sources.
    fraction :
        Share of the combined noise power taken by this source.
    """
    assert 0 < fraction <= 1
    return total_db - 10 * np.log10(fraction)


def gaussian(shape: tuple,
             rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Generate Gaussian noise."""
    if rng is None:
        rng = np.random.default_rng()
    gaussian_ = rng.normal(size=shape)
    return gaussian_


def pink(n_samples: int, f_d: float,
         rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Generate pink noise by 1/sqrt(f) shaping of Gaussian noise.

    The power spectral density is proportional to 1/f from the lowest
    resolved frequency `f_d / n_samples` to the Nyquist frequency.
    """
    white = gaussian(shape=(n_samples, ), rng=rng)
    spectrum = np.fft.rfft(white)
    frequencies = np.fft.rfftfreq(n_samples, d=1 / f_d)
    spectrum[0] = 0
    spectrum[1:] /= np.sqrt(frequencies[1:])
    return np.fft.irfft(spectrum, n=n_samples)


def band_limited(n_samples: int, f_d: float, cutoff_hz: float,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Generate zero-mean Gaussian noise with a flat band below `cutoff_hz`.
    """
    white = gaussian(shape=(n_samples, ), rng=rng)
    spectrum = np.fft.rfft(white)
    frequencies = np.fft.rfftfreq(n_samples, d=1 / f_d)
    mask_band = (frequencies > 0) & (frequencies <= cutoff_hz)
    if not np.any(mask_band):
        raise ValueError(
            f"waveform of {n_samples} samples at {f_d} Hz resolves no "
            f"frequency below the {cutoff_hz} Hz cutoff")
    spectrum[~mask_band] = 0
    return np.fft.irfft(spectrum, n=n_samples)


def _make_noise(spec: NoiseSpec, n_samples: int, f_d: float) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "white":
        return gaussian(shape=(n_samples, ), rng=rng)
    elif spec.kind == "pink":
        return pink(n_samples, f_d, rng=rng)
    elif spec.kind == "environmental":
        return band_limited(n_samples, f_d, spec.cutoff_hz, rng=rng)
    raise ValueError(f"invalid noise kind {spec.kind}")


def inject_noise(
    clean: SampledWaveform,
    spec: NoiseSpec,
    reference_rms: Optional[float] = None,
) -> SampledWaveform:
    """Add one noise source to a waveform.

    Parameters
    ----------
    clean :
        Input waveform.
    spec :
        Noise source.
    reference_rms :
        RMS the SNR refers to. Defaults to the RMS of `clean`; noise chains
        pass the RMS of the noise-free transmission so each stage keeps its
        SNR regardless of its position in the chain.

    Returns
    -------
    SampledWaveform
        `clean` plus noise whose RMS is exactly `reference_rms / 10^(snr/20)`.
    """
    samples = np.asarray(clean.samples, dtype=float)
    if samples.size == 0:
        raise ValueError("cannot add noise to an empty waveform")
    if not np.all(np.isfinite(samples)):
        raise ValueError("waveform has non-finite samples")

    if reference_rms is None:
        reference_rms = qpwms.measures.rms(samples)
    noise_rms = reference_rms / 10**(spec.snr_db / 20)

    noise = _make_noise(spec, len(samples), clean.f_d)
    noise *= noise_rms / qpwms.measures.rms(noise)
    return clean.with_samples(samples + noise)


def apply_noise_stages(
    clean: SampledWaveform,
    specs: Sequence[NoiseSpec],
) -> SampledWaveform:
    """Add noise sources in sequence, all referred to the clean RMS.

    The realization of each stage is seeded from its own seed and its
    position in the sequence.
    """
    reference_rms = qpwms.measures.rms(clean.samples)
    noisy = clean
    for position, spec in enumerate(specs):
        stage_spec = dataclasses.replace(spec,
                                         seed=derive_seed(spec.seed, position))
        noisy = inject_noise(noisy, stage_spec, reference_rms=reference_rms)
    return noisy


def apply_noise_chain(
    clean: SampledWaveform,
    env: NoiseSpec,
    pink: NoiseSpec,
    white: NoiseSpec,
) -> SampledWaveform:
    """Contaminate a clean transmission with environmental, pink and white
    noise, in that order."""
    for name, spec in zip(KINDS, (env, pink, white)):
        if spec.kind != name:
            raise ValueError(f"expected {name} noise, got {spec.kind}")
    return apply_noise_stages(clean, (env, pink, white))


def noisy_beams(
    clean: Sequence[SampledWaveform],
    specs: Sequence[NoiseSpec],
    seed: Seed,
    run: int = 0,
) -> List[SampledWaveform]:
    """One noise realization of every beam of an ensemble run.

    Stage `k` of beam `b` in run `r` is seeded by `derive_seed(seed, r, b,
    k)`, so runs and beams are independent and reproducible.
    """
    noisy = []
    for beam, waveform in enumerate(clean):
        stages = [
            dataclasses.replace(spec, seed=derive_seed(seed, run, beam, k))
            for k, spec in enumerate(specs)
        ]
        noisy.append(apply_noise_stages(waveform, stages))
    return noisy
