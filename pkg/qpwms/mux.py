"""Time multiplexing of several beams onto one digitizer.

The scan is cut into slots of `c` modulation periods. Slot `j` (counted from
1 at the scan trigger) samples beam `i = j - floor((j - 1) / N) * N`, so all
`N` beams are visited in turn within every wavelength scan.
"""

import dataclasses
import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np

from qpwms.errors import ConfigurationError
from qpwms.spectroscopy import SampledWaveform, is_integer_ratio


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class MuxSchedule:
    """Multiplexing parameters of one digitizer.

    N : Beams per digitizer.
    c : Modulation periods per slot.
    f_m : Modulation frequency (Hz).
    f_d : Sampling frequency (Hz).
    t_mux : Worst-case multiplexer response time (s).
    """

    N: int = 4
    c: int = 2
    f_m: float = 62_500.0
    f_d: float = 15_625_000.0
    t_mux: float = 33e-9

    @property
    def samples_per_period(self) -> int:
        return round(self.f_d / self.f_m)

    @property
    def D(self) -> int:
        """Samples per slot."""
        return self.c * self.samples_per_period

    def violations(self) -> List[str]:
        violations = []
        if self.N < 1:
            violations.append("N: at least one beam per digitizer")
        if self.c < 1:
            violations.append("c: at least one modulation period per slot")
        if self.f_m <= 0 or self.f_d <= 0:
            violations.append("f_m, f_d: must be positive")
            return violations
        if not is_integer_ratio(self.f_d, self.f_m):
            violations.append(
                f"f_d: f_d/f_m = {self.f_d / self.f_m:g} is a non-integer "
                "samples per modulation period")
        report = validate_timing(self)
        if not report.valid:
            violations.append(f"t_mux: {report.message}")
        return violations

    def check(self) -> None:
        violations = self.violations()
        if violations:
            raise ConfigurationError("invalid multiplexing schedule",
                                     violations)


@dataclasses.dataclass(frozen=True)
class TimingReport:
    valid: bool
    t_mux: float
    f_d: float
    max_f_d: float
    message: str


def validate_timing(sched: MuxSchedule) -> TimingReport:
    """Check the multiplexer settles between neighbouring samples.

    The switch response time must be shorter than the sampling interval,
    `t_mux < 1/f_d`.
    """
    max_f_d = math.inf if sched.t_mux <= 0 else 1 / sched.t_mux
    valid = sched.t_mux < 1 / sched.f_d
    if valid:
        message = (f"t_mux = {sched.t_mux:.3g} s settles within the "
                   f"{1 / sched.f_d:.3g} s sampling interval")
    else:
        message = (f"t_mux < 1/f_d violated: t_mux = {sched.t_mux:.3g} s, "
                   f"1/f_d = {1 / sched.f_d:.3g} s; maximum f_d is "
                   f"{max_f_d / 1e6:.1f} MHz")
    return TimingReport(valid=valid, t_mux=sched.t_mux, f_d=sched.f_d,
                        max_f_d=max_f_d, message=message)


def beam_index(j: Union[int, np.ndarray],
               N: int) -> Union[int, np.ndarray]:
    """Beam (1..N) sampled by slot(s) `j` (1, 2, ...)."""
    j_ = np.asarray(j)
    if N < 1 or np.any(j_ < 1):
        raise ValueError(f"invalid slot {j} or beam count {N}")
    i = j_ - (j_ - 1) // N * N
    if i.ndim == 0:
        return int(i)
    return i


def n_slots(n_samples: int, sched: MuxSchedule) -> int:
    """Number of whole slots in `n_samples` samples."""
    if n_samples % sched.D != 0:
        raise ValueError(f"{n_samples} samples is not a whole number of "
                         f"{sched.D}-sample slots")
    return n_samples // sched.D


def multiplex(
    beams: Sequence[SampledWaveform],
    sched: MuxSchedule,
) -> SampledWaveform:
    """Interleave the beams slot by slot onto one stream.

    Parameters
    ----------
    beams :
        `N` time-aligned waveforms of equal length, a multiple of `D`.

    Returns
    -------
    SampledWaveform
        Sample `d` taken from beam `beam_index(d // D + 1, N)` at index `d`.
    """
    report = validate_timing(sched)
    if not report.valid:
        raise ConfigurationError(report.message)
    if len(beams) != sched.N:
        raise ValueError(f"expected {sched.N} beams, got {len(beams)}")
    lengths = {len(beam) for beam in beams}
    if len(lengths) != 1:
        raise ValueError(f"beams have different lengths {sorted(lengths)}")
    if any(beam.f_d != sched.f_d for beam in beams):
        raise ValueError(f"beams must be sampled at f_d = {sched.f_d} Hz")

    n_samples = lengths.pop()
    n_slots_ = n_slots(n_samples, sched)
    stacked = np.stack([beam.samples for beam in beams])
    stacked = stacked.reshape(sched.N, n_slots_, sched.D)
    slots = np.arange(1, n_slots_ + 1)
    beam_per_slot = beam_index(slots, sched.N) - 1
    samples = stacked[beam_per_slot, slots - 1].reshape(-1)
    return beams[0].with_samples(samples)


def demultiplex_stream(
    stream: SampledWaveform,
    sched: MuxSchedule,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a multiplexed stream back into per-beam slots.

    Returns
    -------
    list of (int[k], float[k, D])
        For each beam, its slot indices and the samples of these slots.
    """
    n_slots_ = n_slots(len(stream), sched)
    slots_samples = np.asarray(stream.samples).reshape(n_slots_, sched.D)
    slots = np.arange(1, n_slots_ + 1)
    beam_per_slot = beam_index(slots, sched.N)
    return [
        (slots[beam_per_slot == beam], slots_samples[beam_per_slot == beam])
        for beam in range(1, sched.N + 1)
    ]


def assign_digitizers(n_beams: int, N: int) -> List[List[int]]:
    """Group consecutive beams (0-based) onto digitizers of `N` beams."""
    if n_beams % N != 0:
        raise ConfigurationError(
            f"{n_beams} beams cannot be shared evenly between digitizers of "
            f"{N} beams")
    return [list(range(start, start + N)) for start in range(0, n_beams, N)]


@dataclasses.dataclass(frozen=True)
class SchemeBudget:
    """Timing and resource figures of the multiplexing scheme."""

    slots_per_scan: int
    slots_per_portion: int
    samples_per_beam: int
    # Seconds between slots of neighbouring beams.
    beam_interval_s: float
    # Seconds between two slots of the same beam.
    revisit_interval_s: float
    # Seconds between neighbouring beams when multiplexing whole scans.
    tdm_interval_s: float
    digitizer_saving: float
    frame_bits: int


def scheme_budget(
    sched: MuxSchedule,
    f_s: float,
    portion_fraction: float = 0.5,
    out_bits: int = 32,
) -> SchemeBudget:
    """Summarize what multiplexing saves and costs per wavelength scan.

    Parameters
    ----------
    portion_fraction :
        Fraction of the scan kept for spectra (0.5 for one half scan).
    out_bits :
        Width of each exported quadrature value.
    """
    if not is_integer_ratio(sched.f_m, sched.c * f_s):
        raise ConfigurationError(
            f"a scan of {sched.f_m / f_s:g} modulation periods is not a "
            f"whole number of {sched.c}-period slots")
    slots_per_scan = round(sched.f_m / (sched.c * f_s))
    slots_per_portion = round(slots_per_scan * portion_fraction)
    n_quadratures = 4
    return SchemeBudget(
        slots_per_scan=slots_per_scan,
        slots_per_portion=slots_per_portion,
        samples_per_beam=slots_per_portion // sched.N,
        beam_interval_s=sched.c / sched.f_m,
        revisit_interval_s=sched.N * sched.c / sched.f_m,
        tdm_interval_s=1 / f_s,
        digitizer_saving=1 - 1 / sched.N,
        frame_bits=slots_per_scan * n_quadratures * out_bits,
    )
