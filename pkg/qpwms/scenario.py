"""Scenario files: every parameter of a simulation in one JSON document.

Field names carry their units (`f_m_hz`, `L_cm`, `t_mux_s`, ...). Unknown
fields are errors. Example::

    {
      "name": "four beams",
      "line_list": "h2o_7185.csv",
      "drive": {"f_s_hz": 31.25, "f_m_hz": 62500.0},
      "schedule": {"N": 4, "c": 2, "f_d_hz": 15625000.0, "t_mux_s": 3.3e-8},
      "beams": [{"L_cm": 36.0, "T_k": 293.0, "X": 0.008}, ...],
      "noise": {"environmental": {"snr_db": 15.0},
                "detection_snr_db": 56.0},
      "scheme": "both", "portion": "falling", "runs": 500, "seed": 0
    }
"""

import dataclasses
import json
import logging
import os
import pathlib
from typing import Any, Dict, List, Mapping, Optional, Tuple

import qpwms.data
import qpwms.noise
from qpwms.errors import ConfigurationError, ScenarioParseError
from qpwms.lockin import FixedPointSpec
from qpwms.mux import MuxSchedule
from qpwms.noise import NoiseSpec
from qpwms.spectroscopy import (PORTIONS, AbsorptionLine, BeamGasState,
                                LaserDriveConfig, is_integer_ratio)
from qpwms.tomography import PixelGrid


logger = logging.getLogger(__name__)


SCHEMES = ("qp", "fp", "both")

DRIVE_FIELDS = {
    "f_s_hz": "f_s",
    "f_m_hz": "f_m",
    "I_bar": "I_bar",
    "i1_s": "i1_s",
    "i2_s": "i2_s",
    "i1_m": "i1_m",
    "i2_m": "i2_m",
    "phi1_s_rad": "phi1_s",
    "phi2_s_rad": "phi2_s",
    "phi1_m_rad": "phi1_m",
    "phi2_m_rad": "phi2_m",
    "nu_bar_cm-1": "nu_bar",
    "a1_s_cm-1": "a1_s",
    "a2_s_cm-1": "a2_s",
    "a1_m_cm-1": "a1_m",
    "a2_m_cm-1": "a2_m",
    "psi1_s_rad": "psi1_s",
    "psi2_s_rad": "psi2_s",
    "psi1_m_rad": "psi1_m",
    "psi2_m_rad": "psi2_m",
}

SCHEDULE_FIELDS = {"N": "N", "c": "c", "f_d_hz": "f_d", "t_mux_s": "t_mux"}

BEAM_FIELDS = {"L_cm": "L", "P_atm": "P", "T_k": "T", "X": "X"}

NOISE_FIELDS = {"snr_db": "snr_db", "cutoff_hz": "cutoff_hz"}

FIXED_POINT_FIELDS = {
    name: name
    for name in ("adc_bits", "ref_bits", "acc_bits", "shift", "out_bits")
}

GRID_FIELDS = {"nx": "nx", "ny": "ny", "extent_cm": "extent"}

PHANTOM_FIELDS = {
    "peak_X": "peak",
    "center_cm": "center",
    "sigma_cm": "sigma",
    "background_X": "background",
}

SART_FIELDS = {
    "relaxation": "relaxation",
    "iterations": "iterations",
    "nonneg": "nonneg",
}

INTEGER_FIELDS = {
    "N", "c", "nx", "ny", "n_projections", "beams_per_projection",
    "iterations", "runs", "seed", "line_index", "adc_bits", "ref_bits",
    "acc_bits", "shift", "out_bits",
}


@dataclasses.dataclass(frozen=True)
class PhantomConfig:
    peak: float = 0.008
    center: Tuple[float, float] = (0.0, 0.0)
    sigma: float = 3.0
    background: float = 0.0


@dataclasses.dataclass(frozen=True)
class SartConfig:
    relaxation: float = 1.0
    iterations: int = 50
    nonneg: bool = True


@dataclasses.dataclass(frozen=True)
class TomographyConfig:
    """Beam arrangement, region of interest and reconstruction settings.

    reference : Noise-free beam the absorbances are scaled from.
    """

    n_projections: int = 4
    beams_per_projection: int = 8
    d: float = 1.8
    D_beam: float = 36.76
    T: float = 296.0
    P: float = 1.0
    grid: PixelGrid = PixelGrid()
    phantom: PhantomConfig = PhantomConfig()
    reference: BeamGasState = BeamGasState(L=36.76, X=0.008)
    sart: SartConfig = SartConfig()

    @property
    def n_beams(self) -> int:
        return self.n_projections * self.beams_per_projection


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    drive: LaserDriveConfig
    line: AbsorptionLine
    sched: MuxSchedule
    beams: Tuple[BeamGasState, ...] = ()
    noise: Tuple[NoiseSpec, ...] = ()
    scheme: str = "both"
    portion: str = "falling"
    runs: int = 1
    seed: int = 0
    fixed_point: FixedPointSpec = FixedPointSpec()
    tomography: Optional[TomographyConfig] = None
    path: Optional[pathlib.Path] = None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _fields(
    section: Any,
    mapping: Mapping[str, str],
    path: str,
    violations: List[str],
) -> Dict[str, Any]:
    """Keyword arguments of a dataclass from a scenario section."""
    if not isinstance(section, dict):
        violations.append(f"{path}: expected an object")
        return {}
    kwargs = {}
    for key, value in section.items():
        field_path = f"{path}.{key}" if path else key
        if key not in mapping:
            violations.append(f"{field_path}: unknown field")
            continue
        name = mapping[key]
        if name == "nonneg":
            if not isinstance(value, bool):
                violations.append(f"{field_path}: expected true or false")
                continue
        elif name == "center":
            if not (isinstance(value, list) and len(value) == 2
                    and all(_is_number(v) for v in value)):
                violations.append(f"{field_path}: expected [x, y]")
                continue
            value = tuple(float(v) for v in value)
        elif name in INTEGER_FIELDS:
            if not (isinstance(value, int) and not isinstance(value, bool)):
                violations.append(f"{field_path}: expected an integer")
                continue
        elif not _is_number(value):
            violations.append(f"{field_path}: expected a number")
            continue
        else:
            value = float(value)
        kwargs[name] = value
    return kwargs


def _resolve_line_list(name: str,
                       scenario_dir: Optional[pathlib.Path]) -> pathlib.Path:
    if scenario_dir is not None and (scenario_dir / name).exists():
        return scenario_dir / name
    return qpwms.data.bundled_path(name)


def _parse_noise(section: Any,
                 violations: List[str]) -> Tuple[NoiseSpec, ...]:
    if section is None:
        return ()
    if not isinstance(section, dict):
        violations.append("noise: expected an object")
        return ()
    unknown = set(section) - {"environmental", "pink", "white",
                              "detection_snr_db"}
    violations.extend(f"noise.{key}: unknown field" for key in sorted(unknown))

    stages = {}
    for kind in qpwms.noise.KINDS:
        if section.get(kind) is not None:
            stages[kind] = _fields(section[kind], NOISE_FIELDS,
                                   f"noise.{kind}", violations)
    detection = section.get("detection_snr_db")
    if detection is not None:
        if not _is_number(detection):
            violations.append("noise.detection_snr_db: expected a number")
        else:
            for kind in ("pink", "white"):
                if kind in stages:
                    violations.append(
                        f"noise.{kind}: conflicts with detection_snr_db")
                else:
                    stages[kind] = dict(
                        snr_db=float(qpwms.noise.split_snr_db(detection)))

    specs = []
    for kind in qpwms.noise.KINDS:
        if kind not in stages:
            continue
        if "snr_db" not in stages[kind]:
            violations.append(f"noise.{kind}.snr_db: missing")
            continue
        specs.append(NoiseSpec(kind=kind, **stages[kind]))
    return tuple(specs)


def _parse_tomography(section: Any,
                      violations: List[str]) -> Optional[TomographyConfig]:
    if section is None:
        return None
    mapping = {
        "n_projections": "n_projections",
        "beams_per_projection": "beams_per_projection",
        "d_cm": "d",
        "D_beam_cm": "D_beam",
        "T_k": "T",
        "P_atm": "P",
    }
    nested = ("grid", "phantom", "reference", "sart")
    scalars = {key: value for key, value in section.items()
               if key not in nested}
    kwargs: Dict[str, Any] = _fields(scalars, mapping, "tomography",
                                     violations)
    if "grid" in section:
        try:
            kwargs["grid"] = PixelGrid(**_fields(
                section["grid"], GRID_FIELDS, "tomography.grid", violations))
        except ValueError as error:
            violations.append(f"tomography.grid: {error}")
    if "phantom" in section:
        kwargs["phantom"] = PhantomConfig(**_fields(
            section["phantom"], PHANTOM_FIELDS, "tomography.phantom",
            violations))
    if "reference" in section:
        reference = _fields(section["reference"], BEAM_FIELDS,
                            "tomography.reference", violations)
        kwargs["reference"] = BeamGasState(**{
            "L": kwargs.get("D_beam", TomographyConfig.D_beam),
            "T": kwargs.get("T", TomographyConfig.T),
            "P": kwargs.get("P", TomographyConfig.P),
            "X": TomographyConfig.reference.X,
            **reference,
        })
    if "sart" in section:
        kwargs["sart"] = SartConfig(**_fields(section["sart"], SART_FIELDS,
                                              "tomography.sart", violations))
    return TomographyConfig(**kwargs)


def parse_scenario(document: Any,
                   path: Optional[os.PathLike] = None) -> Scenario:
    """Build a scenario from its decoded JSON document.

    Raises
    ------
    ConfigurationError
        Unknown or ill-typed fields, all of them listed.
    """
    violations: List[str] = []
    if not isinstance(document, dict):
        raise ConfigurationError("scenario must be a JSON object")
    path = pathlib.Path(path) if path is not None else None
    known = {
        "name", "line_list", "line_index", "drive", "schedule", "beams",
        "noise", "scheme", "portion", "runs", "seed", "fixed_point",
        "tomography",
    }
    violations.extend(f"{key}: unknown field"
                      for key in sorted(set(document) - known))

    drive = LaserDriveConfig(**_fields(document.get("drive", {}),
                                       DRIVE_FIELDS, "drive", violations))
    sched = MuxSchedule(f_m=drive.f_m, **_fields(
        document.get("schedule", {}), SCHEDULE_FIELDS, "schedule",
        violations))

    beams = []
    beam_sections = document.get("beams", [])
    if not isinstance(beam_sections, list):
        violations.append("beams: expected a list")
        beam_sections = []
    for i, beam in enumerate(beam_sections):
        kwargs = _fields(beam, BEAM_FIELDS, f"beams[{i}]", violations)
        if "L" not in kwargs:
            violations.append(f"beams[{i}].L_cm: missing")
            continue
        beams.append(BeamGasState(**kwargs))

    noise = _parse_noise(document.get("noise"), violations)
    fixed_point = FixedPointSpec(**_fields(
        document.get("fixed_point", {}), FIXED_POINT_FIELDS, "fixed_point",
        violations))
    tomography = _parse_tomography(document.get("tomography"), violations)

    options = _fields(
        {key: document[key] for key in ("runs", "seed", "line_index")
         if key in document},
        {"runs": "runs", "seed": "seed", "line_index": "line_index"}, "",
        violations)
    for key in ("name", "line_list", "scheme", "portion"):
        if key in document and not isinstance(document[key], str):
            violations.append(f"{key}: expected a string")
    if violations:
        raise ConfigurationError("invalid scenario", violations)

    line_list = _resolve_line_list(document.get("line_list", "h2o_7185.csv"),
                                   path.parent if path else None)
    try:
        lines = qpwms.data.load_line_list(line_list)
    except FileNotFoundError as error:
        raise ConfigurationError(f"line_list: {error}") from error
    line_index = options.get("line_index", 0)
    if not 0 <= line_index < len(lines):
        raise ConfigurationError(
            f"line_index: {line_index} not in the {len(lines)} lines of "
            f"{line_list}")

    return Scenario(
        name=document.get("name", path.stem if path else "scenario"),
        drive=drive,
        line=lines[line_index],
        sched=sched,
        beams=tuple(beams),
        noise=noise,
        scheme=document.get("scheme", "both").lower(),
        portion=document.get("portion", "falling").lower(),
        runs=options.get("runs", 1),
        seed=options.get("seed", 0),
        fixed_point=fixed_point,
        tomography=tomography,
        path=path,
    )


def load_scenario(path: os.PathLike) -> Scenario:
    """Read and parse a scenario file, without cross-field validation.

    Raises
    ------
    OSError
        Unreadable file.
    ScenarioParseError
        Malformed JSON, with the line and column of the error.
    ConfigurationError
        Unknown or ill-typed fields.
    """
    path = pathlib.Path(path)
    text = path.read_text()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ScenarioParseError(f"{path}: {error.msg}", line=error.lineno,
                                 column=error.colno) from error
    scenario = parse_scenario(document, path)
    logger.debug(f"loaded scenario {scenario.name} from {path}")
    return scenario


def _prefixed(prefix: str, violations: List[str]) -> List[str]:
    return [f"{prefix}.{violation}" for violation in violations]


def validate(scenario: Scenario) -> List[str]:
    """Every violated invariant, prefixed by its field path."""
    violations = []
    violations += _prefixed("drive", scenario.drive.violations())
    violations += _prefixed("line", scenario.line.violations())
    violations += _prefixed("schedule", scenario.sched.violations())

    drive, sched = scenario.drive, scenario.sched
    if not (drive.f_s > 0 and drive.f_m > 0 and sched.f_d > 0):
        return violations
    if sched.f_d < 4 * drive.f_m:
        violations.append(
            f"schedule.f_d_hz: {sched.f_d:g} Hz is below the Nyquist rate "
            f"{4 * drive.f_m:g} Hz of the 2f component")
    elif not is_integer_ratio(sched.f_d, drive.f_s):
        violations.append("schedule.f_d_hz: non-integer samples per scan")
    if sched.c >= 1 and drive.f_s > 0 and not is_integer_ratio(
            drive.f_m, sched.c * drive.f_s):
        violations.append(
            f"schedule.c: a scan of {drive.f_m / drive.f_s:g} modulation "
            f"periods is not a whole number of {sched.c}-period slots")
    elif sched.N >= 1 and sched.c >= 1:
        slots_per_scan = round(drive.f_m / (sched.c * drive.f_s))
        used = slots_per_scan if scenario.portion == "full" else (
            slots_per_scan // 2)
        if used % sched.N != 0 or (scenario.portion != "full"
                                       and slots_per_scan % 2 != 0):
            violations.append(
                f"schedule.N: {used} slots of the {scenario.portion} scan "
                f"cannot be shared evenly between {sched.N} beams")

    for i, beam in enumerate(scenario.beams):
        violations += _prefixed(f"beams[{i}]", beam.violations())
    n_beams = (scenario.tomography.n_beams if scenario.tomography else
               len(scenario.beams))
    if n_beams == 0:
        violations.append("beams: no beams and no tomography section")
    elif sched.N >= 1 and n_beams % sched.N != 0:
        violations.append(f"beams: {n_beams} beams cannot be shared evenly "
                          f"between digitizers of {sched.N} beams")

    for spec in scenario.noise:
        violations += _prefixed(f"noise.{spec.kind}", spec.violations())
    if scenario.scheme not in SCHEMES:
        violations.append(f"scheme: invalid scheme {scenario.scheme}")
    if scenario.portion not in PORTIONS:
        violations.append(f"portion: invalid scan portion {scenario.portion}")
    if scenario.runs < 1:
        violations.append("runs: at least one run")
    if scenario.seed < 0:
        violations.append("seed: must be >= 0")
    if sched.D >= 1:
        violations += _prefixed("fixed_point",
                                scenario.fixed_point.violations(sched.D))

    tomography = scenario.tomography
    if tomography is not None:
        if tomography.n_projections < 1 or tomography.beams_per_projection < 1:
            violations.append("tomography: at least one projection of one "
                              "beam")
        if not (tomography.d > 0 and tomography.D_beam > 0):
            violations.append("tomography.d_cm, D_beam_cm: must be positive")
        violations += _prefixed("tomography.reference",
                                tomography.reference.violations())
        if not tomography.reference.X > 0:
            violations.append("tomography.reference.X: must be positive")
        if not 0 < tomography.sart.relaxation < 2:
            violations.append("tomography.sart.relaxation: not in (0, 2)")
        if tomography.sart.iterations < 1:
            violations.append("tomography.sart.iterations: at least 1")
        if tomography.phantom.peak < 0 or tomography.phantom.background < 0:
            violations.append("tomography.phantom: mole fractions must be "
                              ">= 0")
        if not tomography.phantom.sigma > 0:
            violations.append("tomography.phantom.sigma_cm: must be positive")
    return violations


def check(scenario: Scenario) -> None:
    violations = validate(scenario)
    if violations:
        raise ConfigurationError(f"invalid scenario {scenario.name}",
                                 violations)


def with_overrides(scenario: Scenario, **overrides: Any) -> Scenario:
    """Copy of `scenario` with the non-None `overrides` applied."""
    changes = {key: value for key, value in overrides.items()
               if value is not None}
    return dataclasses.replace(scenario, **changes)
