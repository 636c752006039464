import argparse
import dataclasses
import logging
import pathlib
import sys
from typing import List, Optional, Sequence

import joblib
import numpy as np

import qpwms.data
import qpwms.fitting
import qpwms.lockin
import qpwms.mux
import qpwms.noise
import qpwms.scenario
import qpwms.spectroscopy
import qpwms.tomography
from qpwms.errors import ConfigurationError, ScenarioParseError
from qpwms.lockin import HarmonicSpectrum
from qpwms.scenario import Scenario
from qpwms.spectroscopy import BeamGasState


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def load_scenario(args) -> Scenario:
    """Load the scenario of the command line, apply overrides and check it.
    """
    scenario = qpwms.scenario.load_scenario(args.scenario)
    scenario = qpwms.scenario.with_overrides(
        scenario, runs=args.runs, seed=args.seed, scheme=args.scheme,
        portion=args.portion)
    qpwms.scenario.check(scenario)
    logger.info(f"scenario {scenario.name}: {len(beam_states(scenario))} "
                f"beams, {scenario.runs} run(s), scheme {scenario.scheme}")
    return scenario


def schemes(scenario: Scenario) -> List[str]:
    return ["fp", "qp"] if scenario.scheme == "both" else [scenario.scheme]


def beam_states(scenario: Scenario) -> List[BeamGasState]:
    """Beams of the scenario, or those sampling its phantom."""
    if scenario.beams:
        return list(scenario.beams)
    tomo = scenario.tomography
    geom, M = build_tomography(scenario)
    phantom = qpwms.tomography.gaussian_phantom(
        tomo.grid, peak=tomo.phantom.peak, center=tomo.phantom.center,
        sigma=tomo.phantom.sigma, background=tomo.phantom.background)
    return qpwms.tomography.beam_states_from_phantom(phantom, M, geom,
                                                     T=tomo.T, P=tomo.P)


def build_tomography(scenario: Scenario):
    tomo = scenario.tomography
    geom = qpwms.tomography.build_geometry(tomo.n_projections,
                                           tomo.beams_per_projection,
                                           tomo.d, tomo.D_beam)
    M = qpwms.tomography.system_matrix(geom, tomo.grid)
    return geom, M


def cmd_validate(args) -> int:
    try:
        scenario = qpwms.scenario.load_scenario(args.scenario)
    except ScenarioParseError:
        raise
    except ConfigurationError as error:
        violations = error.violations
    else:
        scenario = qpwms.scenario.with_overrides(
            scenario, runs=args.runs, seed=args.seed, scheme=args.scheme,
            portion=args.portion)
        violations = qpwms.scenario.validate(scenario)
    for violation in violations:
        logger.error(violation)
    if violations:
        logger.error(f"{args.scenario}: {len(violations)} violation(s)")
        return EXIT_CONFIGURATION
    logger.info(f"{args.scenario}: ok")
    return EXIT_OK


def simulate_run(scenario: Scenario, clean, backgrounds, seed, run: int,
                 digitizer: int, frames: bool = False):
    """Spectra of one digitizer in one run, per scheme, and optionally its
    table of quadrature frames."""
    sched, drive = scenario.sched, scenario.drive
    pipelines = dict(fp=qpwms.lockin.run_fp_pipeline,
                     qp=qpwms.lockin.run_qp_pipeline)
    noisy = qpwms.noise.noisy_beams(clean, scenario.noise, seed, run)
    spectra = {
        scheme: pipelines[scheme](noisy, backgrounds, sched, drive,
                                  scenario.portion)
        for scheme in schemes(scenario)
    }
    table = None
    if frames:
        stream = qpwms.mux.multiplex(noisy, sched)
        quadratures = qpwms.lockin.demodulate_stream(stream, sched)
        background = qpwms.lockin.qp_background(backgrounds, sched)
        values = qpwms.lockin.normalize_2f1f(quadratures, background)
        table = qpwms.lockin.frames_table(quadratures, sched.N, values)
        table["beam"] += digitizer * sched.N
    return spectra, table


def simulate(scenario: Scenario, out: pathlib.Path, frames: bool = False,
             n_jobs: int = 1) -> List[pathlib.Path]:
    """Write the spectra of every run, beam and scheme.

    Both schemes of a run see the same noise realization. Beams are shared
    between digitizers in groups of `N`; the noise of digitizer `g` derives
    from `derive_seed(seed, g)`. Runs are computed by `n_jobs` workers and
    written in order.
    """
    drive, sched, line = scenario.drive, scenario.sched, scenario.line
    states = beam_states(scenario)
    groups = qpwms.mux.assign_digitizers(len(states), sched.N)
    background = qpwms.spectroscopy.synthesize_background(drive, sched.f_d)
    backgrounds = [background] * sched.N

    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for digitizer, group in enumerate(groups):
        clean = [
            qpwms.spectroscopy.synthesize_beam(drive, states[i], line,
                                               sched.f_d) for i in group
        ]
        seed = qpwms.noise.derive_seed(scenario.seed, digitizer)
        runs = joblib.Parallel(n_jobs=n_jobs)(
            joblib.delayed(simulate_run)(scenario, clean, backgrounds, seed,
                                         run, digitizer, frames)
            for run in range(scenario.runs))
        for run, (spectra, table) in enumerate(runs):
            for scheme, scheme_spectra in spectra.items():
                for i, spectrum in zip(group, scheme_spectra):
                    path = qpwms.data.spectrum_path(out, scheme, i + 1, run)
                    spectrum = dataclasses.replace(spectrum, beam=i + 1)
                    qpwms.data.save_spectrum(path, spectrum)
                    paths.append(path)
            if table is not None:
                path = (out / f"frames_run{run:03d}_digitizer"
                        f"{digitizer + 1:02d}.csv")
                qpwms.data.save_frames(path, table)
                paths.append(path)
        logger.debug(f"digitizer {digitizer + 1}/{len(groups)} done")
    logger.info(f"wrote {len(paths)} files to {out}")
    return paths


def cmd_simulate(args) -> int:
    scenario = load_scenario(args)
    simulate(scenario, args.out, frames=args.frames, n_jobs=args.jobs)
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = load_scenario(args)
    if scenario.scheme != "both":
        raise ConfigurationError(
            f"scheme: compare needs both schemes, got {scenario.scheme}")
    if not scenario.beams:
        raise ConfigurationError("beams: compare needs explicit beams")
    stats = qpwms.fitting.compare_fp_qp(
        scenario.runs, scenario.drive, scenario.line, scenario.beams,
        scenario.sched, scenario.noise, seed=scenario.seed,
        portion=scenario.portion, n_jobs=args.jobs)
    report = stats.to_frame()
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "comparison.csv"
    qpwms.data.save_report(path, report)
    maxima = report.iloc[-1]
    logger.info(f"maximum differences: mean "
                f"{maxima['mean_difference_pct']:.3f} %, std "
                f"{maxima['std_difference_pct']:.3f} %; report {path}")
    return EXIT_OK


def reconstruct(
    scenario: Scenario,
    out: pathlib.Path,
    spectra_dir: Optional[pathlib.Path] = None,
) -> qpwms.tomography.ConcentrationImage:
    """Phantom (or saved spectra) to absorbances to image."""
    tomo = scenario.tomography
    if tomo is None:
        raise ConfigurationError("tomography: section missing")
    scheme = "qp" if scenario.scheme == "both" else scenario.scheme
    geom, M = build_tomography(scenario)

    out.mkdir(parents=True, exist_ok=True)
    if spectra_dir is not None:
        spectra: Sequence[HarmonicSpectrum] = qpwms.data.load_spectra(
            spectra_dir, scheme)
        if len(spectra) != len(geom):
            raise ValueError(f"{len(spectra)} spectra in {spectra_dir} for "
                             f"{len(geom)} beams")
    else:
        phantom = qpwms.tomography.gaussian_phantom(
            tomo.grid, peak=tomo.phantom.peak, center=tomo.phantom.center,
            sigma=tomo.phantom.sigma, background=tomo.phantom.background)
        qpwms.data.save_image(out / "phantom.csv", phantom)
        states = qpwms.tomography.beam_states_from_phantom(
            phantom, M, geom, T=tomo.T, P=tomo.P)
        spectra = qpwms.tomography.measure_spectra(
            states, scenario.drive, scenario.line, scenario.sched,
            scenario.noise, scenario.seed, scenario.portion, scheme)

    references = qpwms.tomography.reference_peaks(
        scenario.drive, scenario.line, scenario.sched, tomo.reference,
        scenario.portion, scheme)
    absorbances = qpwms.tomography.absorbances_from_spectra(spectra,
                                                            references)
    factor = qpwms.tomography.absorbance_factor(scenario.line, tomo.T,
                                                tomo.P, tomo.reference.X)
    image = qpwms.tomography.sart_reconstruct(
        M, absorbances / factor, relaxation=tomo.sart.relaxation,
        iterations=tomo.sart.iterations, nonneg=tomo.sart.nonneg)

    qpwms.data.save_sinogram(out / "sinogram.csv", geom, absorbances)
    qpwms.data.save_image(out / "image.csv", image)
    logger.info(f"reconstructed {tomo.grid.ny}x{tomo.grid.nx} image, peak "
                f"X = {np.max(image.values):.4g} at pixel "
                f"{image.peak_pixel()}")
    return image


def cmd_reconstruct(args) -> int:
    scenario = load_scenario(args)
    reconstruct(scenario, args.out, args.spectra)
    return EXIT_OK


def cmd_info(args) -> int:
    scenario = load_scenario(args)
    drive, sched = scenario.drive, scenario.sched
    fraction = 1.0 if scenario.portion == "full" else 0.5
    budget = qpwms.mux.scheme_budget(sched, drive.f_s, fraction,
                                     scenario.fixed_point.out_bits)
    timing = qpwms.mux.validate_timing(sched)
    n_beams = len(beam_states(scenario))
    print(f"samples per slot D:          {sched.D}")
    print(f"samples per scan:            "
          f"{qpwms.spectroscopy.samples_per_scan(drive, sched.f_d)}")
    print(f"slots per scan:              {budget.slots_per_scan}")
    print(f"slots per used portion:      {budget.slots_per_portion}")
    print(f"samples per beam:            {budget.samples_per_beam}")
    print(f"beam interval:               {budget.beam_interval_s * 1e6:g} us")
    print(f"same-beam interval:          "
          f"{budget.revisit_interval_s * 1e6:g} us")
    print(f"TDM beam interval:           {budget.tdm_interval_s * 1e3:g} ms")
    print(f"digitizers:                  {n_beams // sched.N} for "
          f"{n_beams} beams, {100 * budget.digitizer_saving:g} % saved")
    print(f"bits per frame:              {budget.frame_bits}")
    print(f"maximum f_d:                 {timing.max_f_d / 1e6:.1f} MHz")
    print(f"accumulator bits needed:     "
          f"{scenario.fixed_point.required_acc_bits(sched.D)}")
    return EXIT_OK


def cmd_repeatability(args) -> int:
    scenario = load_scenario(args)
    scheme = "qp" if scenario.scheme == "both" else scenario.scheme
    stats = qpwms.fitting.repeatability(
        scenario.runs, scenario.drive, scenario.line, beam_states(scenario),
        scenario.sched, scenario.noise, seed=scenario.seed,
        portion=scenario.portion, scheme=scheme, n_jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "repeatability.csv"
    qpwms.data.save_report(path, stats.to_frame())
    logger.info(f"maximum std {stats.max_std:.3e}, maximum peak difference "
                f"{stats.max_peak_difference_pct:.2f} %; report {path}")
    return EXIT_OK


def parse_args(argv: Optional[Sequence[str]] = None):
    parser = argparse.ArgumentParser(
        description="Quasi-parallel WMS tomography simulation.")
    parser.add_argument("--logging", choices=["info", "debug", "warning"],
                        default="info")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=pathlib.Path, required=True,
                        help="Scenario JSON file.")
    common.add_argument("--out", type=pathlib.Path, default="out",
                        help="Output directory.")
    common.add_argument("--runs", type=int, help="Override the run count.")
    common.add_argument("--seed", type=int, help="Override the master seed.")
    common.add_argument("--scheme", choices=["qp", "fp", "both"])
    common.add_argument("--portion", choices=["falling", "rising", "full"])
    common.add_argument("--jobs", type=int, default=1,
                        help="Workers for ensemble runs, -1 for all cores.")

    subparsers = parser.add_subparsers(required=True)

    parser_validate = subparsers.add_parser("validate", parents=[common])
    parser_validate.set_defaults(func=cmd_validate)

    parser_simulate = subparsers.add_parser("simulate", parents=[common])
    parser_simulate.set_defaults(func=cmd_simulate)
    parser_simulate.add_argument("--frames", action="store_true",
                                 help="Also dump the quadrature frames.")

    parser_compare = subparsers.add_parser("compare", parents=[common])
    parser_compare.set_defaults(func=cmd_compare)

    parser_reconstruct = subparsers.add_parser("reconstruct",
                                               parents=[common])
    parser_reconstruct.set_defaults(func=cmd_reconstruct)
    parser_reconstruct.add_argument(
        "--spectra", type=pathlib.Path,
        help="Directory of spectra written by 'simulate'.")

    parser_info = subparsers.add_parser("info", parents=[common])
    parser_info.set_defaults(func=cmd_info)

    parser_repeatability = subparsers.add_parser("repeatability",
                                                 parents=[common])
    parser_repeatability.set_defaults(func=cmd_repeatability)

    return parser.parse_args(argv)


def run(args) -> int:
    """Run a command and map its failure to an exit code."""
    try:
        return args.func(args)
    except ScenarioParseError as error:
        logger.error(str(error))
        return EXIT_IO
    except ConfigurationError as error:
        for violation in error.violations:
            logger.error(violation)
        return EXIT_CONFIGURATION
    except OSError as error:
        logger.error(str(error))
        return EXIT_IO
    except (ArithmeticError, ValueError) as error:
        logger.error(str(error))
        return EXIT_NUMERIC


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)

    logging.basicConfig(level=getattr(logging, args.logging.upper()))

    return run(args)


if __name__ == "__main__":
    sys.exit(main())
