import dataclasses

import numpy as np
import pytest

import qpwms.data
import qpwms.fitting
import qpwms.spectroscopy
import qpwms.tomography
from qpwms.lockin import HarmonicSpectrum
from qpwms.mux import MuxSchedule
from qpwms.spectroscopy import BeamGasState, LaserDriveConfig
from qpwms.tomography import BeamGeometry, ConcentrationImage, PixelGrid


tight_tolerance = 1e-9

# (x, y) -> (-y, x)
quarter_turn = np.array([[0.0, -1.0], [1.0, 0.0]])

# Blob of the bundled tomography scenario and its peak pixel (iy, ix)
blob = {"center": (1.0, -2.5), "sigma": 2.0}
blob_peak = (4, 8)


@pytest.fixture(scope="module")
def line():
    path = qpwms.data.bundled_path("h2o_7185.csv")
    return qpwms.data.load_line_list(path)[0]


@pytest.fixture(scope="module")
def geometry():
    return qpwms.tomography.build_geometry()


@pytest.fixture(scope="module")
def grid():
    return PixelGrid()


@pytest.fixture(scope="module")
def M(geometry, grid):
    return qpwms.tomography.system_matrix(geometry, grid)


def _segments(starts, ends):
    starts, ends = np.atleast_2d(starts), np.atleast_2d(ends)
    return BeamGeometry(starts=starts, ends=ends,
                        angles=np.zeros(len(starts)),
                        offsets=np.zeros(len(starts)),
                        projection_angles=(0.0, ), d=1.0, D_beam=10.0)


def _clipped_length(start, end, low, high):
    """Length of a segment inside a box, by Liang-Barsky clipping."""
    delta = end - start
    t0, t1 = 0.0, 1.0
    for axis in range(2):
        for p, q in ((-delta[axis], start[axis] - low[axis]),
                     (delta[axis], high[axis] - start[axis])):
            if p == 0:
                if q < 0:
                    return 0.0
                continue
            t = q / p
            if p < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    return max(0.0, t1 - t0) * np.linalg.norm(delta)


def _sampled_projection(image, start, end, n_samples=200_000):
    """Path integral of a pixelized image by dense sampling along a beam."""
    grid = image.grid
    alphas = (np.arange(n_samples) + 0.5) / n_samples
    points = start + alphas[:, None] * (end - start)
    ix = np.floor((points[:, 0] - grid.origin[0]) / grid.dx).astype(int)
    iy = np.floor((points[:, 1] - grid.origin[1]) / grid.dy).astype(int)
    inside = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
    step = np.linalg.norm(end - start) / n_samples
    return np.sum(image.values[iy[inside], ix[inside]]) * step


def test_build_geometry(geometry):
    assert len(geometry) == 32
    assert geometry.projection_angles == (0.0, 45.0, 90.0, 135.0)
    assert np.allclose(geometry.lengths, 36.76)
    assert np.allclose(geometry.offsets[:8], np.arange(-6.3, 6.4, 1.8))
    # Beams of a projection are parallel and centred on their normal.
    centers = (geometry.starts + geometry.ends) / 2
    assert np.allclose(np.linalg.norm(centers, axis=1),
                       np.abs(geometry.offsets))


@pytest.mark.parametrize("args", [(0, 8, 1.8, 36.76), (4, 8, 0.0, 36.76),
                                  (4, 8, 1.8, -1.0)])
def test_build_geometry_invalid(args):
    with pytest.raises(ValueError):
        qpwms.tomography.build_geometry(*args)


def test_pixel_grid():
    grid = PixelGrid(nx=3, ny=2, extent=6.0)

    assert grid.origin == (-3.0, -3.0)
    assert grid.size == 6
    assert np.allclose(grid.x_edges(), [-3, -1, 1, 3])
    assert np.allclose(grid.y_edges(), [-3, 0, 3])
    x, y = grid.centers()
    assert x.shape == (2, 3)
    assert np.allclose(y[:, 0], [-1.5, 1.5])

    with pytest.raises(ValueError):
        PixelGrid(nx=0)


def test_single_pixel_chord():
    grid = PixelGrid(nx=1, ny=1, extent=2.0)
    geom = _segments([-5.0, 0.3], [5.0, 0.3])

    M = qpwms.tomography.system_matrix(geom, grid)

    assert M.shape == (1, 1)
    assert np.isclose(M.matrix[0, 0], 2.0)


def test_horizontal_beams_cross_one_row(grid):
    geom = qpwms.tomography.build_geometry(n_projections=1)

    M = qpwms.tomography.system_matrix(geom, grid)

    dense = M.matrix.toarray()
    for i, offset in enumerate(geom.offsets):
        row = int(np.floor((offset - grid.origin[1]) / grid.dy))
        chords = dense[i].reshape(grid.ny, grid.nx)
        assert np.allclose(chords[row], grid.dx)
        assert np.count_nonzero(chords) == grid.nx


def test_row_sums_match_clipped_lengths(geometry, grid, M):
    low = np.array(grid.origin)
    high = low + grid.extent

    expected = [
        _clipped_length(start, end, low, high)
        for start, end in zip(geometry.starts, geometry.ends)
    ]

    assert np.allclose(M.row_sums, expected, rtol=0, atol=1e-6)


def test_diagonal_row_sum(M, grid):
    # Beam 12 is the fourth of the 45 degree projection, 0.9 cm off centre.
    expected = 2 * np.sqrt(2) * grid.extent / 2 - 2 * 0.9

    assert np.isclose(M.row_sums[11], expected, atol=1e-6)


def test_projection_matches_ray_sampling(geometry, grid, M):
    rng = np.random.default_rng(0)
    image = ConcentrationImage(values=rng.uniform(size=(grid.ny, grid.nx)),
                               grid=grid)

    projections = qpwms.tomography.project_phantom(image, M)

    expected = [
        _sampled_projection(image, start, end)
        for start, end in zip(geometry.starts, geometry.ends)
    ]
    assert np.allclose(projections, expected, rtol=0, atol=1e-2)


def test_project_uniform_image(grid, M):
    image = ConcentrationImage(values=np.full((grid.ny, grid.nx), 0.004),
                               grid=grid)

    projections = qpwms.tomography.project_phantom(image, M, factor=2.0)

    assert np.allclose(projections, 2.0 * 0.004 * M.row_sums)


def test_project_size_mismatch(M):
    image = ConcentrationImage(values=np.zeros((3, 3)), grid=PixelGrid(3, 3))

    with pytest.raises(ValueError):
        qpwms.tomography.project_phantom(image, M)


def test_gaussian_phantom(grid):
    image = qpwms.tomography.gaussian_phantom(grid, peak=0.008,
                                              center=(1.5, -1.0), sigma=3.0)

    assert image.peak_pixel() == (6, 9)
    assert np.max(image.values) <= 0.008
    assert np.min(image.values) > 0


def test_beam_states_from_phantom(geometry, grid, M):
    image = qpwms.tomography.gaussian_phantom(grid)

    states = qpwms.tomography.beam_states_from_phantom(image, M, geometry,
                                                       T=293.0, P=1.0)

    integrals = qpwms.tomography.project_phantom(image, M)
    assert np.allclose([state.X * state.L for state in states], integrals)
    assert all(state.T == 293.0 for state in states)


def test_sart_zero_projections(M):
    image = qpwms.tomography.sart_reconstruct(M, np.zeros(M.shape[0]))

    assert np.all(image.values == 0)


def test_sart_single_pixel():
    grid = PixelGrid(nx=1, ny=1, extent=2.0)
    M = qpwms.tomography.system_matrix(_segments([-5.0, 0.0], [5.0, 0.0]),
                                       grid)

    image = qpwms.tomography.sart_reconstruct(M, np.array([0.6]),
                                              iterations=1)

    assert np.isclose(image.values[0, 0], 0.3)


def _weighted_residual(M, image, b):
    residual = b - M.matrix @ image.values.ravel()
    return np.sum(residual**2 / M.row_sums)


def test_sart_residual_decreases(grid, M):
    phantom = qpwms.tomography.gaussian_phantom(grid, **blob)
    b = qpwms.tomography.project_phantom(phantom, M)

    residuals = [
        _weighted_residual(
            M, qpwms.tomography.sart_reconstruct(M, b, iterations=k), b)
        for k in (1, 2, 5, 10, 20, 50)
    ]

    assert np.all(np.diff(residuals) <= tight_tolerance)


def test_sart_reconstructs_phantom(grid, M):
    phantom = qpwms.tomography.gaussian_phantom(grid, **blob)
    b = qpwms.tomography.project_phantom(phantom, M)

    image = qpwms.tomography.sart_reconstruct(M, b, iterations=50)

    residual = np.linalg.norm(M.matrix @ image.values.ravel() - b)
    assert residual < 0.05 * np.linalg.norm(b)
    assert phantom.peak_pixel() == blob_peak
    iy, ix = image.peak_pixel()
    assert abs(iy - blob_peak[0]) <= 1 and abs(ix - blob_peak[1]) <= 1
    assert np.all(image.values >= 0)


def test_sart_nonnegative(grid, M):
    rng = np.random.default_rng(1)
    b = rng.normal(scale=0.05, size=M.shape[0])

    image = qpwms.tomography.sart_reconstruct(M, b)
    unconstrained = qpwms.tomography.sart_reconstruct(M, b, nonneg=False)

    assert np.all(image.values >= 0)
    assert np.any(unconstrained.values < 0)


def test_rotation_equivariance(geometry, grid, M):
    phantom = qpwms.tomography.gaussian_phantom(grid, center=(1.5, -1.0))
    rotated_phantom = ConcentrationImage(values=np.rot90(phantom.values,
                                                         k=-1),
                                         grid=grid)
    M_rotated = qpwms.tomography.system_matrix(
        geometry.transformed(quarter_turn), grid)

    b = qpwms.tomography.project_phantom(phantom, M)
    b_rotated = qpwms.tomography.project_phantom(rotated_phantom, M_rotated)
    assert np.allclose(b, b_rotated, rtol=0, atol=tight_tolerance)

    image = qpwms.tomography.sart_reconstruct(M, b)
    image_rotated = qpwms.tomography.sart_reconstruct(M_rotated, b)
    assert np.allclose(np.rot90(image.values, k=-1), image_rotated.values,
                       rtol=0, atol=tight_tolerance)


def test_sart_errors(M):
    b = np.zeros(M.shape[0])

    with pytest.raises(ValueError):
        qpwms.tomography.sart_reconstruct(M, b, relaxation=2.0)
    with pytest.raises(ValueError):
        qpwms.tomography.sart_reconstruct(M, b, iterations=0)
    with pytest.raises(ValueError):
        qpwms.tomography.sart_reconstruct(M, b[:-1])

    outside = qpwms.tomography.system_matrix(
        _segments([20.0, 20.0], [30.0, 20.0]), PixelGrid())
    with pytest.raises(ValueError):
        qpwms.tomography.sart_reconstruct(outside, np.zeros(1))


def test_sart_warns_about_missing_beams(caplog):
    geom = _segments([[-5.0, 0.0], [20.0, 20.0]], [[5.0, 0.0], [30.0, 20.0]])
    M = qpwms.tomography.system_matrix(geom, PixelGrid(nx=1, ny=1,
                                                       extent=2.0))

    image = qpwms.tomography.sart_reconstruct(M, np.array([0.6, 1.0]),
                                              iterations=1)

    assert "miss the region of interest" in caplog.text
    assert np.isclose(image.values[0, 0], 0.3)


def test_peak_absorbance():
    spectrum = HarmonicSpectrum(beam=1, values=np.array([1e-3, 2e-3, 1e-3]),
                                slot_index=np.array([1, 2, 3]))

    assert np.isclose(
        qpwms.tomography.peak_absorbance(spectrum, P_s=1e-3, A_s=0.01), 0.02)
    with pytest.raises(ValueError):
        qpwms.tomography.peak_absorbance(spectrum, P_s=0.0, A_s=0.01)
    with pytest.raises(ValueError):
        qpwms.tomography.peak_absorbance(
            dataclasses.replace(spectrum, values=np.array([]),
                                slot_index=np.array([])), P_s=1e-3, A_s=0.01)


def test_absorbance_factor(line):
    gas = BeamGasState(L=36.76, T=293.0, X=0.008)

    factor = qpwms.tomography.absorbance_factor(line, gas.T, gas.P, gas.X)

    peak = qpwms.spectroscopy.absorbance(line.nu0, gas, line)
    assert np.isclose(factor * gas.X * gas.L, peak, rtol=1e-12)


def test_peak_scaling_recovers_absorbance(line):
    line_ = dataclasses.replace(line, gamma_self=line.gamma_air)
    drive, sched = LaserDriveConfig(), MuxSchedule()
    reference = BeamGasState(L=36.76, T=293.0, X=0.008)
    gas = dataclasses.replace(reference, X=0.005)

    references = qpwms.tomography.reference_peaks(drive, line_, sched,
                                                  reference)
    context = qpwms.fitting.FitContext(drive=drive, line=line_, gas=gas,
                                       sched=sched, beam=3)
    spectrum = qpwms.fitting.model_spectrum(gas.X, context)

    A_s, P_s = references[2]
    absorbance = qpwms.tomography.peak_absorbance(spectrum, P_s=P_s, A_s=A_s)

    expected = (qpwms.tomography.absorbance_factor(line_, gas.T, gas.P)
                * gas.X * gas.L)
    assert np.isclose(absorbance, expected, rtol=0.02)


def test_noise_free_reconstruction_chain(line, geometry, grid, M):
    drive, sched = LaserDriveConfig(), MuxSchedule()
    T, P = 293.0, 1.0
    reference = BeamGasState(L=36.76, T=T, X=0.008)
    phantom = qpwms.tomography.gaussian_phantom(grid, **blob)
    states = qpwms.tomography.beam_states_from_phantom(phantom, M, geometry,
                                                       T, P)

    spectra = qpwms.tomography.measure_spectra(states, drive, line, sched)
    references = qpwms.tomography.reference_peaks(drive, line, sched,
                                                  reference)
    absorbances = qpwms.tomography.absorbances_from_spectra(spectra,
                                                            references)
    b = absorbances / qpwms.tomography.absorbance_factor(
        line, T, P, reference.X)

    assert [spectrum.beam for spectrum in spectra] == list(range(1, 33))
    b_true = qpwms.tomography.project_phantom(phantom, M)
    assert np.allclose(b, b_true, rtol=0.05, atol=0.02 * np.max(b_true))

    image = qpwms.tomography.sart_reconstruct(M, b, iterations=50)
    residual = np.linalg.norm(M.matrix @ image.values.ravel() - b)
    assert residual < 0.05 * np.linalg.norm(b)
    iy, ix = image.peak_pixel()
    assert abs(iy - blob_peak[0]) <= 1 and abs(ix - blob_peak[1]) <= 1
