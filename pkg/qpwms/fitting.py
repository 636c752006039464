"""Concentration fits of S_2f/1f spectra and FP versus QP statistics."""

import dataclasses
import functools
import logging
from typing import Any, Dict, List, Sequence, Tuple

import joblib
import numpy as np
import pandas as pd
import scipy.optimize

import qpwms.lockin
import qpwms.mux
import qpwms.noise
import qpwms.spectroscopy
from qpwms.lockin import HarmonicSpectrum
from qpwms.mux import MuxSchedule
from qpwms.noise import NoiseSpec, Seed
from qpwms.spectroscopy import (AbsorptionLine, BeamGasState,
                                LaserDriveConfig, SampledWaveform)


logger = logging.getLogger(__name__)


SCHEMES = ("qp", "fp")

X_BOUNDS = (0.0, 0.05)

# Comparison reports round residual gaps between schemes to this resolution.
RESIDUAL_RESOLUTION = 1e-7


@dataclasses.dataclass(frozen=True)
class FitContext:
    """Everything but the concentration that shapes a beam's spectrum.

    gas : Beam state; its X only sets the collisional width.
    beam : Position (1..N) of the beam on its digitizer.
    scheme : {"qp", "fp"}
        Wavelength grid of the spectrum: the beam's own slots or all slots
        of the scan portion.
    """

    drive: LaserDriveConfig
    line: AbsorptionLine
    gas: BeamGasState
    sched: MuxSchedule
    portion: str = "falling"
    beam: int = 1
    scheme: str = "qp"
    phase: float = 0.0
    n_scans: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"invalid scheme {self.scheme}")
        if not 1 <= self.beam <= self.sched.N:
            raise ValueError(f"beam {self.beam} not in 1..{self.sched.N}")


class ForwardModel:
    """Noise-free spectra of one context as a function of X.

    The laser intensity, the background frames and the absorbance per unit
    mole fraction do not depend on X and are computed once, for the slots of
    the context's wavelength grid only.
    """

    def __init__(self, context: FitContext):
        self.context = context
        drive, sched = context.drive, context.sched
        qpwms.spectroscopy.check_sampling_rate(drive.f_m, sched.f_d)
        n_samples = (context.n_scans
                     * qpwms.spectroscopy.samples_per_scan(drive, sched.f_d))
        n_slots = qpwms.mux.n_slots(n_samples, sched)

        slot_index = np.arange(1, n_slots + 1)
        mask = qpwms.lockin.select_portion(slot_index, drive, sched,
                                           context.portion)
        if context.scheme == "qp":
            mask &= (qpwms.mux.beam_index(slot_index, sched.N)
                     == context.beam)
        self.slot_index = slot_index[mask]

        t = (np.arange(n_samples) / sched.f_d).reshape(n_slots, sched.D)
        t = t[mask]
        self.I0 = qpwms.spectroscopy.laser_intensity(t, drive)
        unit_gas = dataclasses.replace(context.gas, X=1.0)
        phi = qpwms.spectroscopy.lineshape(
            qpwms.spectroscopy.laser_frequency(t, drive), context.line,
            context.gas)
        self.unit_absorbance = (
            unit_gas.L * phi * unit_gas.P
            * qpwms.spectroscopy.line_strength(context.line, unit_gas.T))

        self.references = qpwms.lockin.make_references(
            drive.f_m, sched.f_d, sched.D, context.phase)
        self.background = qpwms.lockin.accumulate_slots(
            self.I0, self.references, self.slot_index)

    def __call__(self, X: float) -> np.ndarray:
        I_t = qpwms.spectroscopy.transmit(self.I0, X * self.unit_absorbance)
        frames = qpwms.lockin.accumulate_slots(I_t, self.references,
                                               self.slot_index)
        return qpwms.lockin.normalize_2f1f(frames, self.background)


@functools.lru_cache(maxsize=64)
def forward_model(context: FitContext) -> ForwardModel:
    return ForwardModel(context)


def model_spectrum(X: float, context: FitContext) -> HarmonicSpectrum:
    """Noise-free spectrum at mole fraction `X` on the context's grid."""
    model = forward_model(context)
    return HarmonicSpectrum(beam=context.beam, values=model(X),
                            slot_index=model.slot_index)


@dataclasses.dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a concentration fit.

    at_bound : The search stopped at an end of the admissible X interval,
        so `X_hat` is a limit of the search rather than a minimum.
    """

    X_hat: float
    residuals: np.ndarray
    residual_mean: float
    residual_std: float
    iterations: int
    converged: bool
    cost: float
    initial_cost: float
    at_bound: bool = False


def fit_concentration(
    measured: HarmonicSpectrum,
    context: FitContext,
    X0: float = 0.01,
    bounds: Tuple[float, float] = X_BOUNDS,
    xatol: float = 1e-6,
    maxiter: int = 200,
) -> FitResult:
    """Least-squares fit of the mole fraction.

    Minimize sum((measured - model_spectrum(X))^2) over X in `bounds` with a
    bounded Brent search.

    Parameters
    ----------
    measured :
        Spectrum on the grid of `context`.
    X0 :
        Initial guess within `bounds`; the fit never returns a worse X than
        this one.
    xatol :
        Absolute tolerance on X. A result within `2 * xatol` of either end
        of `bounds` is flagged `at_bound`.

    Returns
    -------
    FitResult
        `residual_mean` is the mean absolute residual, `residual_std` the
        population standard deviation of the signed residuals.
    """
    if len(measured) == 0:
        raise ValueError("cannot fit an empty spectrum")
    if not X0 > 0:
        raise ValueError(f"initial guess must be positive, got {X0}")
    if not bounds[0] <= X0 <= bounds[1]:
        raise ValueError(f"initial guess {X0} outside the bounds {bounds}")
    model = forward_model(context)
    if not np.array_equal(measured.slot_index, model.slot_index):
        raise ValueError(
            f"spectrum of {len(measured)} samples is not on the "
            f"{context.scheme.upper()} grid of beam {context.beam} "
            f"({len(model.slot_index)} samples)")
    values = np.asarray(measured.values, dtype=float)

    def cost(X: float) -> float:
        return float(np.sum((values - model(X))**2))

    result = scipy.optimize.minimize_scalar(
        cost, bounds=bounds, method="bounded",
        options=dict(xatol=xatol, maxiter=maxiter))
    X_hat, best_cost = float(result.x), float(result.fun)
    initial_cost = cost(X0)
    converged = bool(result.success)
    if initial_cost < best_cost:
        X_hat, best_cost, converged = X0, initial_cost, False
    if not converged:
        logger.warning(f"fit of beam {context.beam} did not converge within "
                       f"{maxiter} iterations, X = {X_hat:.6g}")
    at_bound = min(X_hat - bounds[0], bounds[1] - X_hat) <= 2 * xatol
    if at_bound:
        logger.warning(f"fit of beam {context.beam} stopped at the bound "
                       f"X = {X_hat:.6g} of {bounds}")

    residuals = values - model(X_hat)
    return FitResult(
        X_hat=X_hat,
        residuals=residuals,
        residual_mean=float(np.mean(np.abs(residuals))),
        residual_std=float(np.std(residuals)),
        iterations=int(result.nit),
        converged=converged,
        cost=best_cost,
        initial_cost=initial_cost,
        at_bound=at_bound,
    )


def _percent_difference(reference: np.ndarray, other: np.ndarray,
                        resolution: float = 0.0) -> np.ndarray:
    """100 |reference - other| / reference, gaps up to `resolution` as 0."""
    difference = np.abs(reference - other)
    difference = np.where(difference > resolution, difference, 0.0)
    return 100 * np.divide(difference, reference,
                           out=np.zeros_like(difference),
                           where=difference > 0)


@dataclasses.dataclass(frozen=True, eq=False)
class ComparisonStats:
    """Fit residual statistics per beam under both schemes.

    Means and standard deviations over runs of the per-run mean absolute
    residual, float[n_beams]. `fp_at_bound` and `qp_at_bound` count the
    runs whose fit stopped at a bound of X, int[n_beams].
    """

    n_runs: int
    fp_mean: np.ndarray
    fp_std: np.ndarray
    qp_mean: np.ndarray
    qp_std: np.ndarray
    fp_X_hat: np.ndarray
    qp_X_hat: np.ndarray
    fp_at_bound: np.ndarray
    qp_at_bound: np.ndarray

    @property
    def mean_difference_pct(self) -> np.ndarray:
        return _percent_difference(self.fp_mean, self.qp_mean)

    @property
    def std_difference_pct(self) -> np.ndarray:
        return _percent_difference(self.fp_std, self.qp_std)

    def to_frame(self) -> pd.DataFrame:
        """One row per beam and a final row of maxima.

        Differences between the schemes are reported to
        `RESIDUAL_RESOLUTION`.
        """
        n_beams = len(self.fp_mean)
        report = pd.DataFrame({
            "beam": [str(beam) for beam in range(1, n_beams + 1)],
            "fp_mean": self.fp_mean,
            "fp_std": self.fp_std,
            "qp_mean": self.qp_mean,
            "qp_std": self.qp_std,
            "mean_difference_pct": _percent_difference(
                self.fp_mean, self.qp_mean, RESIDUAL_RESOLUTION),
            "std_difference_pct": _percent_difference(
                self.fp_std, self.qp_std, RESIDUAL_RESOLUTION),
            "fp_at_bound": self.fp_at_bound,
            "qp_at_bound": self.qp_at_bound,
        })
        summary = report.drop(columns="beam").max().to_frame().T
        summary.insert(0, "beam", "max")
        return pd.concat([report, summary], ignore_index=True)


def _clean_beams(
    drive: LaserDriveConfig,
    line: AbsorptionLine,
    gases: Sequence[BeamGasState],
    sched: MuxSchedule,
    n_scans: int = 1,
) -> Tuple[List[SampledWaveform], List[SampledWaveform]]:
    beams = [
        qpwms.spectroscopy.synthesize_beam(drive, gas, line, sched.f_d,
                                           n_scans) for gas in gases
    ]
    background = qpwms.spectroscopy.synthesize_background(
        drive, sched.f_d, n_scans)
    return beams, [background] * len(gases)


def _log_progress(run: int, n_runs: int, what: str) -> None:
    step = max(1, n_runs // 10)
    if (run + 1) % step == 0 or run + 1 == n_runs:
        logger.info(f"{what}: run {run + 1}/{n_runs}")


def _compare_run(
    run: int,
    n_runs: int,
    clean: Sequence[SampledWaveform],
    backgrounds: Sequence[SampledWaveform],
    background_frames: Dict[str, Any],
    contexts: Dict[str, List[FitContext]],
    noise: Sequence[NoiseSpec],
    seed: Seed,
    X0: float,
    bounds: Tuple[float, float],
) -> Dict[str, np.ndarray]:
    """Residual means, X estimates and bound hits of one run, float[3, n]
    per scheme."""
    context = contexts["fp"][0]
    sched, drive, portion = context.sched, context.drive, context.portion
    noisy = qpwms.noise.noisy_beams(clean, noise, seed, run)
    spectra = {
        "fp": qpwms.lockin.run_fp_pipeline(
            noisy, backgrounds, sched, drive, portion,
            background_frames=background_frames["fp"]),
        "qp": qpwms.lockin.run_qp_pipeline(
            noisy, backgrounds, sched, drive, portion,
            background_frames=background_frames["qp"]),
    }
    results = {}
    for scheme in SCHEMES:
        fits = [
            fit_concentration(spectrum, context, X0=X0, bounds=bounds)
            for spectrum, context in zip(spectra[scheme], contexts[scheme])
        ]
        results[scheme] = np.array([[fit.residual_mean for fit in fits],
                                    [fit.X_hat for fit in fits],
                                    [fit.at_bound for fit in fits]])
    logger.debug(f"run {run}: FP {results['fp'][0]}, QP {results['qp'][0]}")
    _log_progress(run, n_runs, "compare")
    return results


def compare_fp_qp(
    n_runs: int,
    drive: LaserDriveConfig,
    line: AbsorptionLine,
    gases: Sequence[BeamGasState],
    sched: MuxSchedule,
    noise: Sequence[NoiseSpec],
    seed: Seed = 0,
    portion: str = "falling",
    X0: float = 0.01,
    bounds: Tuple[float, float] = X_BOUNDS,
    n_jobs: int = 1,
) -> ComparisonStats:
    """Fit the same noisy beams demodulated by both schemes, run after run.

    Every run draws one noise realization per beam and feeds the identical
    waveforms through the FP and the QP pipeline. Runs are independent and
    spread over `n_jobs` joblib workers; the statistics do not depend on the
    number of workers.
    """
    if n_runs < 2:
        raise ValueError(f"need at least 2 runs, got {n_runs}")
    if len(gases) != sched.N:
        raise ValueError(f"{len(gases)} beams for a digitizer of {sched.N}")
    clean, backgrounds = _clean_beams(drive, line, gases, sched)
    background_frames = {
        "fp": qpwms.lockin.fp_background(backgrounds, sched),
        "qp": qpwms.lockin.qp_background(backgrounds, sched),
    }
    contexts = {
        scheme: [
            FitContext(drive=drive, line=line, gas=gas, sched=sched,
                       portion=portion, beam=beam, scheme=scheme)
            for beam, gas in enumerate(gases, start=1)
        ]
        for scheme in SCHEMES
    }

    runs = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_compare_run)(run, n_runs, clean, backgrounds,
                                     background_frames, contexts, noise,
                                     seed, X0, bounds)
        for run in range(n_runs))
    # float[n_runs, 3, n_beams] per scheme, in run order
    stacked = {scheme: np.stack([result[scheme] for result in runs])
               for scheme in SCHEMES}
    residual_means = {scheme: stacked[scheme][:, 0] for scheme in SCHEMES}
    at_bound = {scheme: np.sum(stacked[scheme][:, 2], axis=0).astype(int)
                for scheme in SCHEMES}
    n_at_bound = sum(int(np.sum(hits)) for hits in at_bound.values())
    if n_at_bound:
        logger.warning(f"{n_at_bound} of {2 * n_runs * len(gases)} fits "
                       "stopped at a bound of X")

    return ComparisonStats(
        n_runs=n_runs,
        fp_mean=np.mean(residual_means["fp"], axis=0),
        fp_std=np.std(residual_means["fp"], axis=0),
        qp_mean=np.mean(residual_means["qp"], axis=0),
        qp_std=np.std(residual_means["qp"], axis=0),
        fp_X_hat=np.mean(stacked["fp"][:, 1], axis=0),
        qp_X_hat=np.mean(stacked["qp"][:, 1], axis=0),
        fp_at_bound=at_bound["fp"],
        qp_at_bound=at_bound["qp"],
    )


@dataclasses.dataclass(frozen=True, eq=False)
class RepeatabilityStats:
    """Spread of repeated noisy measurements.

    mean_spectra, std_spectra : float[n_beams, n]
        Per-wavelength mean and standard deviation over runs.
    peaks : float[n_runs, n_beams]
        Spectrum peak of every run and beam.
    """

    mean_spectra: np.ndarray
    std_spectra: np.ndarray
    peaks: np.ndarray

    @property
    def max_std(self) -> float:
        return float(np.max(self.std_spectra))

    @property
    def max_peak_difference_pct(self) -> float:
        """Largest relative gap between the mean peaks of two beams."""
        peak_means = np.mean(self.peaks, axis=0)
        return float(100 * (np.max(peak_means) - np.min(peak_means))
                     / np.mean(peak_means))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "beam": np.arange(1, self.peaks.shape[1] + 1),
            "peak_mean": np.mean(self.peaks, axis=0),
            "peak_std": np.std(self.peaks, axis=0),
            "max_std": np.max(self.std_spectra, axis=1),
        })


def _repeatability_run(
    run: int,
    n_runs: int,
    clean: Sequence[SampledWaveform],
    backgrounds: Sequence[SampledWaveform],
    background_frames: Any,
    sched: MuxSchedule,
    drive: LaserDriveConfig,
    noise: Sequence[NoiseSpec],
    seed: Seed,
    portion: str,
    scheme: str,
) -> np.ndarray:
    run_pipeline = (qpwms.lockin.run_qp_pipeline if scheme == "qp" else
                    qpwms.lockin.run_fp_pipeline)
    noisy = qpwms.noise.noisy_beams(clean, noise, seed, run)
    spectra = run_pipeline(noisy, backgrounds, sched, drive, portion,
                           background_frames=background_frames)
    _log_progress(run, n_runs, "repeatability")
    return np.stack([spectrum.values for spectrum in spectra])


def repeatability(
    n_runs: int,
    drive: LaserDriveConfig,
    line: AbsorptionLine,
    gases: Sequence[BeamGasState],
    sched: MuxSchedule,
    noise: Sequence[NoiseSpec],
    seed: Seed = 0,
    portion: str = "falling",
    scheme: str = "qp",
    n_jobs: int = 1,
) -> RepeatabilityStats:
    """Repeat noisy measurements of fixed beams and collect their spread."""
    if n_runs < 2:
        raise ValueError(f"need at least 2 runs, got {n_runs}")
    if scheme not in SCHEMES:
        raise ValueError(f"invalid scheme {scheme}")
    clean, backgrounds = _clean_beams(drive, line, gases, sched)
    if scheme == "qp":
        background: Any = qpwms.lockin.qp_background(backgrounds, sched)
    else:
        background = qpwms.lockin.fp_background(backgrounds, sched)

    runs = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(_repeatability_run)(run, n_runs, clean, backgrounds,
                                           background, sched, drive, noise,
                                           seed, portion, scheme)
        for run in range(n_runs))
    runs_ = np.stack(runs)
    return RepeatabilityStats(mean_spectra=np.mean(runs_, axis=0),
                              std_spectra=np.std(runs_, axis=0),
                              peaks=np.max(runs_, axis=2))
