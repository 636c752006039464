"""Beam geometry, line-of-sight projections and SART image reconstruction.

Plane coordinates in cm with the beam array centred on the origin. Images
are indexed `values[iy, ix]` with `iy` increasing along +y; pixel `(iy, ix)`
is column `iy * nx + ix` of the system matrix.
"""

import dataclasses
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse

import qpwms.fitting
import qpwms.lockin
import qpwms.mux
import qpwms.noise
import qpwms.spectroscopy
from qpwms.fitting import FitContext
from qpwms.lockin import HarmonicSpectrum
from qpwms.mux import MuxSchedule
from qpwms.noise import NoiseSpec, Seed
from qpwms.spectroscopy import (AbsorptionLine, BeamGasState,
                                LaserDriveConfig)


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class BeamGeometry:
    """Parallel-beam projections.

    starts, ends : float[n, 2]
        Beam end points (cm), beams grouped by projection.
    angles : float[n]
        Direction of each beam (deg).
    offsets : float[n]
        Signed distance of each beam from the origin (cm).
    """

    starts: np.ndarray
    ends: np.ndarray
    angles: np.ndarray
    offsets: np.ndarray
    projection_angles: Tuple[float, ...]
    d: float
    D_beam: float

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    def transformed(self, matrix: np.ndarray) -> "BeamGeometry":
        """Geometry with every end point mapped by a 2x2 `matrix`."""
        return dataclasses.replace(self, starts=self.starts @ matrix.T,
                                   ends=self.ends @ matrix.T)


@dataclasses.dataclass(frozen=True)
class PixelGrid:
    """Square region of interest cut into `ny` rows of `nx` pixels.

    origin : Lower-left corner (cm), defaults to centring the region.
    """

    nx: int = 15
    ny: int = 15
    extent: float = 14.4
    origin: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"invalid grid {self.nx}x{self.ny}")
        if not self.extent > 0:
            raise ValueError(f"invalid extent {self.extent}")
        if self.origin is None:
            object.__setattr__(self, "origin",
                               (-self.extent / 2, -self.extent / 2))

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def dx(self) -> float:
        return self.extent / self.nx

    @property
    def dy(self) -> float:
        return self.extent / self.ny

    def x_edges(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx + 1) * self.dx

    def y_edges(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny + 1) * self.dy

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel centre coordinates, each float[ny, nx]."""
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)


@dataclasses.dataclass(frozen=True, eq=False)
class SystemMatrix:
    """Chord lengths (cm) of every beam (row) through every pixel (column).
    """

    matrix: scipy.sparse.csr_matrix
    grid: PixelGrid

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    @property
    def col_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()


@dataclasses.dataclass(frozen=True, eq=False)
class ConcentrationImage:
    """Mole fraction per pixel, float[ny, nx]."""

    values: np.ndarray
    grid: PixelGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(f"image of shape {self.values.shape} does not "
                             f"match a {self.grid.ny}x{self.grid.nx} grid")

    def peak_pixel(self) -> Tuple[int, int]:
        """(iy, ix) of the largest value."""
        iy, ix = np.unravel_index(np.argmax(self.values), self.values.shape)
        return int(iy), int(ix)


def build_geometry(
    n_projections: int = 4,
    beams_per_projection: int = 8,
    d: float = 1.8,
    D_beam: float = 36.76,
) -> BeamGeometry:
    """Equiangular projections of parallel beams centred on the origin.

    Projection `p` is at `p * 180 / n_projections` degrees; its beams are
    spaced `d` apart along the projection normal, each `D_beam` long and
    centred on the normal.
    """
    if n_projections < 1 or beams_per_projection < 1:
        raise ValueError("need at least one projection of one beam")
    if not (d > 0 and D_beam > 0):
        raise ValueError(f"invalid spacing {d} or beam length {D_beam}")

    projection_angles = tuple(p * 180 / n_projections
                              for p in range(n_projections))
    offsets = (np.arange(beams_per_projection)
               - (beams_per_projection - 1) / 2) * d
    starts, ends, angles, beam_offsets = [], [], [], []
    for angle in projection_angles:
        theta = np.deg2rad(angle)
        direction = np.array([np.cos(theta), np.sin(theta)])
        normal = np.array([-np.sin(theta), np.cos(theta)])
        for offset in offsets:
            center = offset * normal
            starts.append(center - D_beam / 2 * direction)
            ends.append(center + D_beam / 2 * direction)
            angles.append(angle)
            beam_offsets.append(offset)
    return BeamGeometry(starts=np.array(starts), ends=np.array(ends),
                        angles=np.array(angles),
                        offsets=np.array(beam_offsets),
                        projection_angles=projection_angles, d=d,
                        D_beam=D_beam)


def _chords(start: np.ndarray, end: np.ndarray,
            grid: PixelGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Pixels crossed by one segment and the length inside each."""
    delta = end - start
    length = np.linalg.norm(delta)
    alphas = [np.array([0.0, 1.0])]
    for axis, edges in enumerate((grid.x_edges(), grid.y_edges())):
        if delta[axis] != 0:
            crossings = (edges - start[axis]) / delta[axis]
            alphas.append(crossings[(crossings > 0) & (crossings < 1)])
    alphas_ = np.unique(np.concatenate(alphas))

    middle = (alphas_[:-1] + alphas_[1:]) / 2
    points = start + middle[:, None] * delta
    ix = np.floor((points[:, 0] - grid.origin[0]) / grid.dx).astype(int)
    iy = np.floor((points[:, 1] - grid.origin[1]) / grid.dy).astype(int)
    chords = np.diff(alphas_) * length
    inside = ((ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
              & (chords > 0))
    return iy[inside] * grid.nx + ix[inside], chords[inside]


def system_matrix(geom: BeamGeometry, grid: PixelGrid) -> SystemMatrix:
    """Exact chord lengths by traversing the grid lines along each beam."""
    rows, columns, chords = [], [], []
    for i, (start, end) in enumerate(zip(geom.starts, geom.ends)):
        pixels, lengths = _chords(start, end, grid)
        rows.append(np.full(len(pixels), i))
        columns.append(pixels)
        chords.append(lengths)
    matrix = scipy.sparse.csr_matrix(
        (np.concatenate(chords), (np.concatenate(rows),
                                  np.concatenate(columns))),
        shape=(len(geom), grid.size))
    return SystemMatrix(matrix=matrix, grid=grid)


def absorbance_factor(line: AbsorptionLine, T: float, P: float,
                      X_ref: float = 0.0) -> float:
    """Line-centre absorbance per unit mole fraction and cm.

    Parameters
    ----------
    X_ref :
        Mole fraction setting the self-broadened line width.
    """
    gas = BeamGasState(L=1.0, P=P, T=T, X=X_ref)
    phi = qpwms.spectroscopy.lineshape(line.nu0, line, gas)
    return float(phi * P * qpwms.spectroscopy.line_strength(line, T))


def peak_absorbance(spectrum: HarmonicSpectrum, P_s: float,
                    A_s: float) -> float:
    """Absorbance of a measured spectrum scaled from a reference,
    A = P * (A_s / P_s), P being the spectrum peak."""
    if not (P_s > 0 and A_s > 0):
        raise ValueError(f"invalid reference P_s={P_s}, A_s={A_s}")
    return spectrum.peak * A_s / P_s


def project_phantom(image: ConcentrationImage, M: SystemMatrix,
                    factor: float = 1.0) -> np.ndarray:
    """Path-integrated absorbance of every beam, `factor * M @ x`."""
    if M.shape[1] != image.values.size:
        raise ValueError(f"image of {image.values.size} pixels for a system "
                         f"matrix of {M.shape[1]} columns")
    return factor * (M.matrix @ image.values.ravel())


def gaussian_phantom(
    grid: PixelGrid,
    peak: float = 0.008,
    center: Tuple[float, float] = (0.0, 0.0),
    sigma: float = 3.0,
    background: float = 0.0,
) -> ConcentrationImage:
    """Gaussian blob of mole fraction sampled at the pixel centres."""
    x, y = grid.centers()
    r2 = (x - center[0])**2 + (y - center[1])**2
    values = background + peak * np.exp(-r2 / (2 * sigma**2))
    return ConcentrationImage(values=values, grid=grid)


def beam_states_from_phantom(
    image: ConcentrationImage,
    M: SystemMatrix,
    geom: BeamGeometry,
    T: float,
    P: float,
) -> List[BeamGasState]:
    """Uniform beams with the path-integrated concentration of the image.

    Each beam gets the chord-weighted mean mole fraction over its path
    through the region of interest. Beams missing the region get X = 0 over
    their full length.
    """
    row_sums = M.row_sums
    integrals = M.matrix @ image.values.ravel()
    states = []
    for row_sum, integral in zip(row_sums, integrals):
        if row_sum > 0:
            states.append(BeamGasState(L=row_sum, P=P, T=T,
                                       X=float(integral / row_sum)))
        else:
            states.append(BeamGasState(L=geom.D_beam, P=P, T=T, X=0.0))
    return states


def reference_peaks(
    drive: LaserDriveConfig,
    line: AbsorptionLine,
    sched: MuxSchedule,
    reference: BeamGasState,
    portion: str = "falling",
    scheme: str = "qp",
) -> List[Tuple[float, float]]:
    """Reference absorbance and spectrum peak (A_s, P_s) per digitizer
    position, from the noise-free model of a `reference` beam."""
    A_s = (absorbance_factor(line, reference.T, reference.P, reference.X)
           * reference.X * reference.L)
    references = []
    for beam in range(1, sched.N + 1):
        context = FitContext(drive=drive, line=line, gas=reference,
                             sched=sched, portion=portion, beam=beam,
                             scheme=scheme)
        P_s = qpwms.fitting.model_spectrum(reference.X, context).peak
        references.append((A_s, P_s))
    return references


def absorbances_from_spectra(
    spectra: Sequence[HarmonicSpectrum],
    references: Sequence[Tuple[float, float]],
) -> np.ndarray:
    """Absorbance of every beam scaled from the reference of its digitizer
    position.

    Parameters
    ----------
    spectra :
        All beams in geometry order; beam `i` (0-based) sits at position
        `i % N` of its digitizer.
    """
    N = len(references)
    absorbances = []
    for i, spectrum in enumerate(spectra):
        A_s, P_s = references[i % N]
        absorbances.append(peak_absorbance(spectrum, P_s=P_s, A_s=A_s))
    return np.array(absorbances)


def measure_spectra(
    states: Sequence[BeamGasState],
    drive: LaserDriveConfig,
    line: AbsorptionLine,
    sched: MuxSchedule,
    noise: Sequence[NoiseSpec] = (),
    seed: Seed = 0,
    portion: str = "falling",
    scheme: str = "qp",
) -> List[HarmonicSpectrum]:
    """Spectra of all beams, `N` consecutive beams per digitizer.

    Returns
    -------
    list of HarmonicSpectrum
        In geometry order, `beam` numbered from 1 across all digitizers.
    """
    background = qpwms.spectroscopy.synthesize_background(drive, sched.f_d)
    groups = qpwms.mux.assign_digitizers(len(states), sched.N)
    run_pipeline = (qpwms.lockin.run_qp_pipeline if scheme == "qp" else
                    qpwms.lockin.run_fp_pipeline)
    spectra: List[HarmonicSpectrum] = []
    for digitizer, group in enumerate(groups):
        clean = [
            qpwms.spectroscopy.synthesize_beam(drive, states[i], line,
                                               sched.f_d) for i in group
        ]
        noisy = qpwms.noise.noisy_beams(
            clean, noise, qpwms.noise.derive_seed(seed, digitizer))
        group_spectra = run_pipeline(noisy, [background] * len(group), sched,
                                     drive, portion)
        for i, spectrum in zip(group, group_spectra):
            spectra.append(dataclasses.replace(spectrum, beam=i + 1))
        logger.debug(f"digitizer {digitizer + 1}: beams "
                     f"{[i + 1 for i in group]}")
    return spectra


def sart_reconstruct(
    M: SystemMatrix,
    b: np.ndarray,
    relaxation: float = 1.0,
    iterations: int = 50,
    nonneg: bool = True,
    x0: Optional[np.ndarray] = None,
) -> ConcentrationImage:
    """Simultaneous algebraic reconstruction technique.

    Every sweep back-projects all row-normalized residuals at once,

        x <- x + relaxation * M^T ((b - M x) / row_sums) / col_sums

    and clamps negative pixels to zero if `nonneg`.

    Parameters
    ----------
    b : float[n_beams]
        Path integrals in the units of `x` times cm.
    relaxation :
        In (0, 2).
    x0 : float[n_pixels], optional
        Initial image, zero by default.

    References
    ----------
    .. [1] https://en.wikipedia.org/wiki/Algebraic_reconstruction_technique
    """
    if not 0 < relaxation < 2:
        raise ValueError(f"relaxation {relaxation} not in (0, 2)")
    if iterations < 1:
        raise ValueError(f"invalid number of iterations {iterations}")
    b = np.asarray(b, dtype=float)
    if len(b) != M.shape[0]:
        raise ValueError(f"{len(b)} projections for {M.shape[0]} beams")
    if M.matrix.count_nonzero() == 0:
        raise ValueError("system matrix is all zero")

    row_sums, col_sums = M.row_sums, M.col_sums
    rows_used = row_sums > 0
    if not np.all(rows_used):
        logger.warning(f"beams {list(np.flatnonzero(~rows_used) + 1)} miss "
                       "the region of interest and are ignored")
    inverse_rows = np.divide(1, row_sums, out=np.zeros_like(row_sums),
                             where=rows_used)
    cols_used = col_sums > 0
    inverse_cols = np.divide(1, col_sums, out=np.zeros_like(col_sums),
                             where=cols_used)

    x = np.zeros(M.shape[1]) if x0 is None else np.array(x0, dtype=float)
    for _ in range(iterations):
        residual = (b - M.matrix @ x) * inverse_rows
        x = x + relaxation * inverse_cols * (M.matrix.T @ residual)
        if nonneg:
            x = np.maximum(x, 0)
    logger.debug(f"SART: {iterations} sweeps, projection residual "
                 f"{np.linalg.norm(M.matrix @ x - b):.3e}")
    return ConcentrationImage(values=x.reshape(M.grid.ny, M.grid.nx),
                              grid=M.grid)
