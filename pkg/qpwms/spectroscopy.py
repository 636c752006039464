"""Laser, absorption and transmission model of a single beam.

The laser injection current is a slow sinusoidal scan at `f_s` plus a fast
sinusoidal modulation at `f_m`. Both the output intensity and the optical
frequency follow the current with first- and second-order terms. The beam
crosses a uniform gas sample and is attenuated following Beer-Lambert's law
with a single Voigt absorption line.
"""

import dataclasses
import logging
from typing import List, Tuple, Union

import numpy as np
import scipy.constants
import scipy.special

from qpwms.errors import ConfigurationError


logger = logging.getLogger(__name__)


ArrayLike = Union[float, np.ndarray]


# Second radiation constant h*c/k (cm K).
C2 = scipy.constants.h * scipy.constants.c / scipy.constants.k * 100

# Exponent of the power-law approximation of the partition sum of water.
PARTITION_EXPONENT = 1.5

PORTIONS = ("falling", "rising", "full")


def is_integer_ratio(numerator: float, denominator: float,
                     rtol: float = 1e-9) -> bool:
    ratio = numerator / denominator
    return ratio > 0 and abs(ratio - round(ratio)) <= rtol * ratio


@dataclasses.dataclass(frozen=True)
class LaserDriveConfig:
    """Scan and modulation parameters of the laser.

    Frequencies in Hz, intensities relative (dimensionless), wavenumbers and
    tuning amplitudes in cm^-1, phases in radians.
    """

    f_s: float = 31.25
    f_m: float = 62_500.0

    I_bar: float = 0.5
    i1_s: float = 0.2
    i2_s: float = 0.0
    i1_m: float = 0.1
    i2_m: float = 0.0
    phi1_s: float = 0.0
    phi2_s: float = 0.0
    phi1_m: float = 0.0
    phi2_m: float = 0.0

    nu_bar: float = 7185.6
    a1_s: float = 0.25
    a2_s: float = 0.0
    a1_m: float = 0.006
    a2_m: float = 0.0
    psi1_s: float = 0.0
    psi2_s: float = 0.0
    psi1_m: float = 0.0
    psi2_m: float = 0.0

    @property
    def periods_per_scan(self) -> int:
        return round(self.f_m / self.f_s)

    def violations(self) -> List[str]:
        violations = []
        if not 0 < self.f_s < self.f_m:
            violations.append("f_s, f_m: require 0 < f_s < f_m")
        elif not is_integer_ratio(self.f_m, self.f_s):
            violations.append(
                f"f_m: f_m/f_s = {self.f_m / self.f_s} is not an integer")
        if self.I_bar <= 0:
            violations.append("I_bar: must be positive")
        amplitudes = dict(
            i1_s=self.i1_s, i2_s=self.i2_s, i1_m=self.i1_m, i2_m=self.i2_m,
            a1_s=self.a1_s, a2_s=self.a2_s, a1_m=self.a1_m, a2_m=self.a2_m,
        )
        for name, value in amplitudes.items():
            if value < 0:
                violations.append(f"{name}: amplitude must be >= 0")
        # The two half offsets sum to I_bar, the cosines can at worst all
        # reach -1 together.
        modulation_depth = self.i1_s + self.i2_s + self.i1_m + self.i2_m
        if modulation_depth >= 1:
            violations.append(
                "i1_s, i2_s, i1_m, i2_m: sum of intensity amplitudes must be "
                "< 1 so that the intensity stays positive")
        return violations


@dataclasses.dataclass(frozen=True)
class AbsorptionLine:
    """Spectroscopic parameters of one absorption line.

    nu0 and E_low in cm^-1, S_ref in cm^-2 atm^-1, broadening coefficients in
    cm^-1 atm^-1 (half widths), molar_mass in g/mol, T_ref in K.
    """

    nu0: float
    S_ref: float
    gamma_air: float
    gamma_self: float
    n_T: float
    E_low: float
    molar_mass: float
    T_ref: float = 296.0

    def violations(self) -> List[str]:
        violations = []
        if self.nu0 <= 0:
            violations.append("nu0: must be positive")
        if self.S_ref <= 0:
            violations.append("S_ref: must be positive")
        if self.gamma_air < 0 or self.gamma_self < 0:
            violations.append("gamma_air, gamma_self: must be >= 0")
        if self.T_ref <= 0:
            violations.append("T_ref: must be positive")
        if self.molar_mass <= 0:
            violations.append("molar_mass: must be positive")
        return violations


@dataclasses.dataclass(frozen=True)
class BeamGasState:
    """Uniform gas along a beam: L (cm), P (atm), T (K), mole fraction X."""

    L: float
    P: float = 1.0
    T: float = 296.0
    X: float = 0.0

    def violations(self) -> List[str]:
        violations = []
        for name in ("L", "P", "T"):
            if getattr(self, name) <= 0:
                violations.append(f"{name}: must be positive")
        if not 0 <= self.X <= 1:
            violations.append("X: mole fraction must be in [0, 1]")
        return violations


@dataclasses.dataclass(frozen=True, eq=False)
class SampledWaveform:
    """Uniformly sampled relative intensity."""

    f_d: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if self.f_d <= 0:
            raise ValueError(f"invalid sample rate {self.f_d}")

    def __len__(self) -> int:
        return len(self.samples)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.f_d

    def with_samples(self, samples: np.ndarray) -> "SampledWaveform":
        return dataclasses.replace(self, samples=samples)


def intensity_components(
    t: ArrayLike,
    drive: LaserDriveConfig,
) -> Tuple[ArrayLike, ArrayLike]:
    """Scan and modulation components of the laser intensity."""
    omega_s = 2 * np.pi * drive.f_s * t
    omega_m = 2 * np.pi * drive.f_m * t
    scan = drive.I_bar * (
        0.5
        + drive.i1_s * np.cos(omega_s + drive.phi1_s)
        + drive.i2_s * np.cos(2 * omega_s + drive.phi2_s)
    )
    modulation = drive.I_bar * (
        0.5
        + drive.i1_m * np.cos(omega_m + drive.phi1_m)
        + drive.i2_m * np.cos(2 * omega_m + drive.phi2_m)
    )
    return scan, modulation


def laser_intensity(t: ArrayLike, drive: LaserDriveConfig) -> ArrayLike:
    """Relative laser output intensity at time(s) `t` (s)."""
    scan, modulation = intensity_components(t, drive)
    return scan + modulation


def laser_frequency(t: ArrayLike, drive: LaserDriveConfig) -> ArrayLike:
    """Laser optical frequency (cm^-1) at time(s) `t` (s)."""
    omega_s = 2 * np.pi * drive.f_s * t
    omega_m = 2 * np.pi * drive.f_m * t
    nu_scan = (drive.a1_s * np.cos(omega_s + drive.psi1_s)
               + drive.a2_s * np.cos(2 * omega_s + drive.psi2_s))
    nu_modulation = (drive.a1_m * np.cos(omega_m + drive.psi1_m)
                     + drive.a2_m * np.cos(2 * omega_m + drive.psi2_m))
    return drive.nu_bar + nu_scan + nu_modulation


def scan_slope(t: ArrayLike, drive: LaserDriveConfig) -> ArrayLike:
    """Time derivative of the scanned optical frequency (cm^-1/s)."""
    omega_s = 2 * np.pi * drive.f_s * t
    return -2 * np.pi * drive.f_s * (
        drive.a1_s * np.sin(omega_s + drive.psi1_s)
        + 2 * drive.a2_s * np.sin(2 * omega_s + drive.psi2_s)
    )


def portion_mask(t: np.ndarray, drive: LaserDriveConfig,
                 portion: str) -> np.ndarray:
    """Select instants on the falling or rising half of the scan.

    Parameters
    ----------
    t : float[n]
        Instants (s).
    portion : {"falling", "rising", "full"}

    Returns
    -------
    bool[n]
    """
    if portion == "full":
        return np.full(np.shape(t), True)
    slope = scan_slope(t, drive)
    if portion == "falling":
        return slope < 0
    elif portion == "rising":
        return slope > 0
    raise ValueError(f"invalid scan portion {portion}")


def line_strength(line: AbsorptionLine, T: float) -> float:
    """Line strength (cm^-2 atm^-1) at temperature `T` (K).

    Pressure-normalized strength, scaled from `T_ref` with the lower-state
    Boltzmann population, the stimulated emission factor, the partition sum
    approximated as a power law of temperature, and the number density at
    fixed pressure.
    """
    T_ref = line.T_ref
    partition_ratio = (T_ref / T)**PARTITION_EXPONENT
    density_ratio = T_ref / T
    boltzmann = np.exp(-C2 * line.E_low * (1 / T - 1 / T_ref))
    stimulated = ((1 - np.exp(-C2 * line.nu0 / T))
                  / (1 - np.exp(-C2 * line.nu0 / T_ref)))
    return (line.S_ref * partition_ratio * density_ratio * boltzmann
            * stimulated)


def doppler_sigma(line: AbsorptionLine, T: float) -> float:
    """Standard deviation (cm^-1) of the Gaussian Doppler profile."""
    mass_kg = line.molar_mass * 1e-3 / scipy.constants.N_A
    return line.nu0 * np.sqrt(
        scipy.constants.k * T / (mass_kg * scipy.constants.c**2))


def collisional_hwhm(line: AbsorptionLine, gas: BeamGasState) -> float:
    """Half width at half maximum (cm^-1) of the Lorentzian profile."""
    gamma_ref = gas.X * line.gamma_self + (1 - gas.X) * line.gamma_air
    return gas.P * gamma_ref * (line.T_ref / gas.T)**line.n_T


def lineshape(nu: ArrayLike, line: AbsorptionLine,
              gas: BeamGasState) -> ArrayLike:
    """Area-normalized Voigt profile (cm) at wavenumber(s) `nu` (cm^-1)."""
    sigma = doppler_sigma(line, gas.T)
    gamma = collisional_hwhm(line, gas)
    return scipy.special.voigt_profile(np.subtract(nu, line.nu0), sigma,
                                       gamma)


def absorbance(nu: ArrayLike, gas: BeamGasState,
               line: AbsorptionLine) -> ArrayLike:
    """Spectral absorbance alpha(nu) of a uniform beam."""
    phi = lineshape(nu, line, gas)
    return gas.L * phi * gas.P * line_strength(line, gas.T) * gas.X


def transmit(I0: ArrayLike, alpha: ArrayLike) -> ArrayLike:
    return I0 * np.exp(-alpha)


def check_sampling_rate(f_m: float, f_d: float) -> None:
    """Check the sample rate resolves the second harmonic of modulation.

    Raises
    ------
    ConfigurationError
        Below the Nyquist rate of the 2f component.
    """
    nyquist = 2 * (2 * f_m)
    if f_d < nyquist:
        raise ConfigurationError(
            f"f_d = {f_d} Hz is below the Nyquist rate {nyquist} Hz of the "
            "2f component")
    margin = 100
    if f_d < margin * 2 * f_m:
        logger.warning(f"f_d = {f_d} Hz is less than {margin} times the 2f "
                       "frequency; lock-in accuracy degrades")


def samples_per_scan(drive: LaserDriveConfig, f_d: float) -> int:
    if not is_integer_ratio(f_d, drive.f_s):
        raise ConfigurationError(
            f"f_d/f_s = {f_d / drive.f_s} is not an integer number of "
            "samples per scan")
    return round(f_d / drive.f_s)


def synthesize_beam(
    drive: LaserDriveConfig,
    gas: BeamGasState,
    line: AbsorptionLine,
    f_d: float,
    n_scans: int = 1,
) -> SampledWaveform:
    """Sample the transmitted intensity of one beam over whole scans.

    Returns
    -------
    SampledWaveform
        `n_scans * f_d / f_s` samples starting at the scan trigger (t = 0).
    """
    check_sampling_rate(drive.f_m, f_d)
    if n_scans < 1:
        raise ValueError(f"invalid number of scans {n_scans}")
    n_samples = n_scans * samples_per_scan(drive, f_d)

    t = np.arange(n_samples) / f_d
    I0 = laser_intensity(t, drive)
    alpha = absorbance(laser_frequency(t, drive), gas, line)
    I_t = transmit(I0, alpha)

    logger.debug(f"synthesized {n_samples} samples, X={gas.X}, "
                 f"peak absorbance {np.max(alpha):.3e}")
    return SampledWaveform(f_d=f_d, samples=I_t)


def synthesize_background(
    drive: LaserDriveConfig,
    f_d: float,
    n_scans: int = 1,
) -> SampledWaveform:
    """Sample the absorption-free laser intensity."""
    check_sampling_rate(drive.f_m, f_d)
    n_samples = n_scans * samples_per_scan(drive, f_d)
    t = np.arange(n_samples) / f_d
    return SampledWaveform(f_d=f_d, samples=laser_intensity(t, drive))
