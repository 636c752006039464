import dataclasses

import numpy as np
import pytest
import scipy.integrate

import qpwms.data
import qpwms.spectroscopy
from qpwms.errors import ConfigurationError
from qpwms.spectroscopy import BeamGasState, LaserDriveConfig


def _line():
    path = qpwms.data.bundled_path("h2o_7185.csv")
    return qpwms.data.load_line_list(path)[0]


def test_laser_intensity_at_trigger():
    drive = LaserDriveConfig()

    intensity = qpwms.spectroscopy.laser_intensity(0.0, drive)

    expected_intensity = 0.5 * (0.5 + 0.2) + 0.5 * (0.5 + 0.1)
    assert np.isclose(intensity, expected_intensity, rtol=1e-12)


def test_laser_intensity_is_periodic_in_scans():
    drive = LaserDriveConfig()
    t = np.linspace(0, 1 / drive.f_s, 1001)

    intensity = qpwms.spectroscopy.laser_intensity(t, drive)
    intensity_next_scan = qpwms.spectroscopy.laser_intensity(
        t + 1 / drive.f_s, drive)

    assert np.allclose(intensity, intensity_next_scan, rtol=1e-9)


def test_laser_frequency_at_trigger():
    drive = LaserDriveConfig()

    nu = qpwms.spectroscopy.laser_frequency(0.0, drive)

    assert np.isclose(nu, drive.nu_bar + 0.256, rtol=1e-12)


def test_scan_slope_sign_on_half_scans():
    drive = LaserDriveConfig()
    period = 1 / drive.f_s
    t_falling = np.linspace(0.01, 0.49, 50) * period
    t_rising = np.linspace(0.51, 0.99, 50) * period

    assert np.all(qpwms.spectroscopy.portion_mask(t_falling, drive,
                                                  "falling"))
    assert np.all(qpwms.spectroscopy.portion_mask(t_rising, drive, "rising"))
    assert not np.any(
        qpwms.spectroscopy.portion_mask(t_rising, drive, "falling"))


def test_drive_violations():
    assert LaserDriveConfig().violations() == []

    too_deep = LaserDriveConfig(i1_s=0.6, i1_m=0.5)
    assert any("amplitudes" in v for v in too_deep.violations())

    non_integer = LaserDriveConfig(f_s=30.0)
    assert any("not an integer" in v for v in non_integer.violations())


def test_line_strength_at_reference_temperature():
    line = _line()

    assert qpwms.spectroscopy.line_strength(line, line.T_ref) == line.S_ref


def test_line_strength_temperature_dependence():
    line = _line()

    strength_cold = qpwms.spectroscopy.line_strength(line, 250.0)
    strength_hot = qpwms.spectroscopy.line_strength(line, 600.0)

    # A lower-state energy near 1000 cm^-1 strengthens the line as T rises.
    assert strength_cold < line.S_ref < strength_hot


def test_lineshape_normalization():
    line = _line()
    gas = BeamGasState(L=36.0, T=296.0, X=0.008)
    nu = np.linspace(line.nu0 - 50, line.nu0 + 50, 200_001)

    phi = qpwms.spectroscopy.lineshape(nu, line, gas)
    area = scipy.integrate.trapezoid(phi, nu)

    assert np.isclose(area, 1.0, atol=1e-3)



def test_lineshape_lorentzian_limit():
    # A heavy absorber has a vanishing Doppler width.
    line = dataclasses.replace(_line(), molar_mass=1e9)
    gas = BeamGasState(L=36.0, T=296.0, X=0.008)
    gamma = qpwms.spectroscopy.collisional_hwhm(line, gas)

    phi = qpwms.spectroscopy.lineshape(line.nu0, line, gas)

    assert np.isclose(phi, 1 / (np.pi * gamma), rtol=1e-3)


def test_lineshape_gaussian_limit():
    line = _line()
    gas = BeamGasState(L=36.0, P=1e-6, T=296.0, X=0.008)
    sigma = qpwms.spectroscopy.doppler_sigma(line, gas.T)

    phi = qpwms.spectroscopy.lineshape(line.nu0, line, gas)

    assert np.isclose(phi, 1 / (sigma * np.sqrt(2 * np.pi)), rtol=1e-3)


def test_lineshape_is_symmetric():
    line = _line()
    gas = BeamGasState(L=36.0, T=293.0, X=0.008)
    delta = np.array([1e-3, 0.02, 0.05, 0.3, 2.0])

    phi_above = qpwms.spectroscopy.lineshape(line.nu0 + delta, line, gas)
    phi_below = qpwms.spectroscopy.lineshape(line.nu0 - delta, line, gas)

    assert np.allclose(phi_above, phi_below, rtol=1e-9, atol=0)


def test_peak_absorbance_matches_convolution_quadrature():
    line = _line()
    gas = BeamGasState(L=36.0, P=1.0, T=line.T_ref, X=0.008)
    sigma = qpwms.spectroscopy.doppler_sigma(line, gas.T)
    gamma = qpwms.spectroscopy.collisional_hwhm(line, gas)

    def integrand(x):
        gauss = np.exp(-x**2 / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))
        lorentz = gamma / (np.pi * (x**2 + gamma**2))
        return gauss * lorentz

    limit = 40 * sigma
    phi_peak, _ = scipy.integrate.quad(integrand, -limit, limit,
                                       points=[0.0], epsabs=0, epsrel=1e-12,
                                       limit=500)
    expected_peak = (gas.L * phi_peak * gas.P
                     * qpwms.spectroscopy.line_strength(line, gas.T) * gas.X)

    peak = qpwms.spectroscopy.absorbance(line.nu0, gas, line)

    assert np.isclose(peak, expected_peak, rtol=1e-6)


def test_absorbance_linear_in_concentration():
    line = dataclasses.replace(_line(), gamma_self=_line().gamma_air)
    nu = np.linspace(line.nu0 - 0.3, line.nu0 + 0.3, 101)
    gas = BeamGasState(L=36.0, T=293.0, X=0.004)

    alpha = qpwms.spectroscopy.absorbance(nu, gas, line)
    alpha_double = qpwms.spectroscopy.absorbance(
        nu, dataclasses.replace(gas, X=0.008), line)

    assert np.allclose(alpha_double, 2 * alpha, rtol=1e-12)


def test_transmit_zero_absorbance():
    I0 = np.array([0.1, 0.5, 0.9])

    assert np.array_equal(qpwms.spectroscopy.transmit(I0, 0.0), I0)


def test_synthesize_beam_sample_count():
    drive = LaserDriveConfig()
    gas = BeamGasState(L=36.0, T=293.0, X=0.008)

    waveform = qpwms.spectroscopy.synthesize_beam(drive, gas, _line(),
                                                  f_d=15.625e6)

    assert len(waveform) == 500_000
    assert np.all(waveform.samples > 0)


def test_synthesize_beam_without_gas_is_background():
    drive = LaserDriveConfig()
    gas = BeamGasState(L=36.0, T=293.0, X=0.0)

    beam = qpwms.spectroscopy.synthesize_beam(drive, gas, _line(),
                                              f_d=15.625e6)
    background = qpwms.spectroscopy.synthesize_background(drive, f_d=15.625e6)

    assert np.array_equal(beam.samples, background.samples)


def test_absorption_lowers_transmission():
    drive = LaserDriveConfig()
    gas = BeamGasState(L=36.0, T=293.0, X=0.008)

    beam = qpwms.spectroscopy.synthesize_beam(drive, gas, _line(),
                                              f_d=15.625e6)
    background = qpwms.spectroscopy.synthesize_background(drive, f_d=15.625e6)

    assert np.all(beam.samples <= background.samples)
    assert np.min(beam.samples / background.samples) < 0.995


def test_sampling_rate_below_nyquist():
    with pytest.raises(ConfigurationError):
        qpwms.spectroscopy.check_sampling_rate(f_m=62_500.0, f_d=200_000.0)


def test_sampling_rate_margin_warning(caplog):
    qpwms.spectroscopy.check_sampling_rate(f_m=62_500.0, f_d=1_000_000.0)

    assert "lock-in accuracy" in caplog.text


def test_non_integer_samples_per_scan():
    drive = LaserDriveConfig()

    with pytest.raises(ConfigurationError):
        qpwms.spectroscopy.samples_per_scan(drive, f_d=1_000_000.1)


def test_gas_state_violations():
    assert BeamGasState(L=36.0, X=0.008).violations() == []
    assert len(BeamGasState(L=0.0, X=1.5).violations()) == 2
