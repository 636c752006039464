import json

import numpy as np
import pandas as pd
import pytest

import qpwms.data
import qpwms.tomography
from qpwms.fitting import ComparisonStats
from qpwms.lockin import HarmonicSpectrum
from qpwms.tomography import ConcentrationImage, PixelGrid


def _spectrum(beam=1, n=5, seed=0):
    rng = np.random.default_rng(seed)
    return HarmonicSpectrum(beam=beam, values=rng.uniform(0, 1e-3, size=n),
                            slot_index=beam + 4 * np.arange(n))


def test_bundled_line_list():
    lines = qpwms.data.load_line_list(
        qpwms.data.bundled_path("h2o_7185.csv"))

    assert len(lines) == 1
    assert lines[0].nu0 == 7185.59665
    assert lines[0].T_ref == 296.0


def test_line_list_missing_columns(tmp_path):
    path = tmp_path / "lines.csv"
    path.write_text("nu0,S_ref\n7185.6,0.005\n")

    with pytest.raises(ValueError):
        qpwms.data.load_line_list(path)


def test_spectrum_file(tmp_path):
    spectrum = _spectrum(beam=3)
    path = qpwms.data.spectrum_path(tmp_path, "qp", 3, run=12)

    qpwms.data.save_spectrum(path, spectrum)
    loaded = qpwms.data.load_spectrum(path)

    assert path.name == "qp_run012_beam03.csv"
    assert loaded.beam == 3
    assert np.array_equal(loaded.values, spectrum.values)
    assert np.array_equal(loaded.slot_index, spectrum.slot_index)


def test_spectrum_file_columns(tmp_path):
    path = tmp_path / "spectrum.csv"

    qpwms.data.save_spectrum(path, _spectrum())

    df = pd.read_csv(path)
    assert list(df.columns) == qpwms.data.SPECTRUM_COLUMNS
    assert df["wavelength_index"].tolist() == [0, 1, 2, 3, 4]


def test_spectrum_file_with_several_beams(tmp_path):
    path = tmp_path / "spectrum.csv"
    df = qpwms.data.spectrum_to_frame(_spectrum())
    df.loc[0, "beam"] = 2
    df.to_csv(path, index=False)

    with pytest.raises(ValueError):
        qpwms.data.load_spectrum(path)


def test_load_spectra(tmp_path):
    for beam in (10, 2, 1):
        qpwms.data.save_spectrum(
            qpwms.data.spectrum_path(tmp_path, "fp", beam),
            _spectrum(beam=beam))
    qpwms.data.save_spectrum(qpwms.data.spectrum_path(tmp_path, "fp", 1, 1),
                             _spectrum())

    spectra = qpwms.data.load_spectra(tmp_path, "fp")

    assert [spectrum.beam for spectrum in spectra] == [1, 2, 10]
    with pytest.raises(FileNotFoundError):
        qpwms.data.load_spectra(tmp_path, "qp")


def test_image_file(tmp_path):
    grid = PixelGrid(nx=4, ny=3, extent=6.0, origin=(-1.0, -2.0))
    values = np.arange(12, dtype=float).reshape(3, 4) / 7
    path = tmp_path / "image.csv"

    qpwms.data.save_image(path, ConcentrationImage(values=values, grid=grid))
    loaded = qpwms.data.load_image(path)

    assert loaded.grid == grid
    assert np.array_equal(loaded.values, values)
    with open(tmp_path / "image.json") as file:
        assert json.load(file)["units"] == "mole fraction"


def test_sinogram_file(tmp_path):
    geom = qpwms.tomography.build_geometry()
    absorbances = np.linspace(0, 0.01, len(geom))
    path = tmp_path / "sinogram.csv"

    qpwms.data.save_sinogram(path, geom, absorbances)
    sinogram = qpwms.data.load_sinogram(path)

    assert len(sinogram) == 32
    assert sinogram["beam"].tolist() == list(range(1, 33))
    assert np.array_equal(sinogram["absorbance"], absorbances)
    assert sinogram["angle_deg"].iloc[-1] == 135.0

    with pytest.raises(ValueError):
        qpwms.data.sinogram_frame(geom, absorbances[:-1])


def test_report_file(tmp_path):
    stats = ComparisonStats(n_runs=2,
                            fp_mean=np.array([1e-3, 2e-3]),
                            fp_std=np.array([1e-4, 2e-4]),
                            qp_mean=np.array([1e-3, 2e-3]),
                            qp_std=np.array([1e-4, 2e-4]),
                            fp_X_hat=np.array([0.008, 0.007]),
                            qp_X_hat=np.array([0.008, 0.007]),
                            fp_at_bound=np.array([0, 0]),
                            qp_at_bound=np.array([0, 0]))
    path = tmp_path / "comparison.csv"

    qpwms.data.save_report(path, stats.to_frame())
    report = qpwms.data.load_report(path)

    assert report["beam"].tolist() == ["1", "2", "max"]
    assert np.array_equal(report["fp_mean"], [1e-3, 2e-3, 2e-3])
