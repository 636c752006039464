"""Digital lock-in demodulation of multiplexed and per-beam streams.

Each slot of `D` samples is multiplied by in-phase and quadrature references
at the modulation frequency and its second harmonic, and accumulated. The
2f quadratures are normalized by the 1f magnitude and background-corrected,
giving one S_2f/1f value per slot. Demultiplexing hands the value of slot `j`
to beam `beam_index(j, N)`.
"""

import dataclasses
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import qpwms.mux
from qpwms.errors import (ConfigurationError, FixedPointOverflowError,
                          UnusableSlotError)
from qpwms.mux import MuxSchedule
from qpwms.spectroscopy import (LaserDriveConfig, SampledWaveform,
                                is_integer_ratio, portion_mask)


logger = logging.getLogger(__name__)


References = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


@dataclasses.dataclass(frozen=True)
class QuadratureFrame:
    """Accumulated quadratures of one slot."""

    X1f: float
    Y1f: float
    X2f: float
    Y2f: float
    slot_index: int

    @property
    def R1f(self) -> float:
        return math.hypot(self.X1f, self.Y1f)


@dataclasses.dataclass(frozen=True, eq=False)
class QuadratureFrames:
    """Quadratures of consecutive or selected slots.

    X1f, Y1f, X2f, Y2f : float[n] or int[n]
    slot_index : int[n]
        Slot numbers counted from 1 at the scan trigger.
    """

    X1f: np.ndarray
    Y1f: np.ndarray
    X2f: np.ndarray
    Y2f: np.ndarray
    slot_index: np.ndarray

    def __len__(self) -> int:
        return len(self.slot_index)

    def __getitem__(self, i: int) -> QuadratureFrame:
        return QuadratureFrame(X1f=self.X1f[i], Y1f=self.Y1f[i],
                               X2f=self.X2f[i], Y2f=self.Y2f[i],
                               slot_index=int(self.slot_index[i]))

    @property
    def R1f(self) -> np.ndarray:
        return np.hypot(self.X1f, self.Y1f)

    def take(self, selection: np.ndarray) -> "QuadratureFrames":
        """Subset by boolean mask or positions."""
        return QuadratureFrames(X1f=self.X1f[selection],
                                Y1f=self.Y1f[selection],
                                X2f=self.X2f[selection],
                                Y2f=self.Y2f[selection],
                                slot_index=self.slot_index[selection])


@dataclasses.dataclass(frozen=True, eq=False)
class HarmonicSpectrum:
    """S_2f/1f samples of one beam, ordered along the scan.

    beam : Beam number (1-based).
    values : float[n]
    slot_index : int[n]
        Slot each value was demodulated from.
    """

    beam: int
    values: np.ndarray
    slot_index: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    @property
    def peak(self) -> float:
        if len(self.values) == 0:
            raise ValueError(f"empty spectrum of beam {self.beam}")
        return float(np.max(self.values))


@dataclasses.dataclass(frozen=True)
class FixedPointSpec:
    """Word widths (bits) of the fixed-point demodulator."""

    adc_bits: int = 14
    ref_bits: int = 14
    acc_bits: int = 37
    shift: int = 5
    out_bits: int = 32

    @property
    def product_bits(self) -> int:
        return self.adc_bits + self.ref_bits

    @property
    def ref_scale(self) -> int:
        return 2**(self.ref_bits - 1) - 1

    def required_acc_bits(self, D: int) -> int:
        """Product width plus the growth of accumulating `D` products."""
        return self.product_bits + math.ceil(math.log2(D))

    def violations(self, D: int) -> List[str]:
        violations = []
        for name in ("adc_bits", "ref_bits", "acc_bits", "out_bits"):
            if getattr(self, name) < 2:
                violations.append(f"{name}: at least 2 bits")
        if self.shift < 0:
            violations.append("shift: must be >= 0")
        if self.acc_bits > 63:
            violations.append("acc_bits: at most 63 bits")
        if self.acc_bits < self.required_acc_bits(D):
            violations.append(
                f"acc_bits: {self.acc_bits} bits cannot accumulate {D} "
                f"products of {self.product_bits} bits, need "
                f"{self.required_acc_bits(D)}")
        if self.out_bits > self.acc_bits - self.shift:
            violations.append(
                f"out_bits: {self.out_bits} exceeds the "
                f"{self.acc_bits - self.shift} bits left after the shift")
        return violations


def make_references(f_m: float, f_d: float, D: int,
                    phase: float = 0.0) -> References:
    """Unit sinusoidal references of one slot.

    Returns
    -------
    R_I1f, R_Q1f, R_I2f, R_Q2f : float[D]
        In-phase and quadrature references at `f_m` and at `2 f_m`, the
        quadrature ones leading by pi/2.
    """
    if not is_integer_ratio(f_d, f_m):
        raise ConfigurationError(
            f"f_d/f_m = {f_d / f_m:g} is a non-integer samples per "
            "modulation period")
    samples_per_period = round(f_d / f_m)
    if D % samples_per_period != 0:
        raise ConfigurationError(
            f"slot of {D} samples is not a whole number of "
            f"{samples_per_period}-sample modulation periods")
    theta = 2 * np.pi * np.arange(D) / samples_per_period
    return (np.cos(theta + phase), np.cos(theta + phase + np.pi / 2),
            np.cos(2 * theta + phase), np.cos(2 * theta + phase + np.pi / 2))


def accumulate_slots(
    slots: np.ndarray,
    references: Sequence[np.ndarray],
    slot_index: np.ndarray,
    **kwargs,
) -> QuadratureFrames:
    # Row-wise sums, so every slot's result depends on its own samples only.
    X1f, Y1f, X2f, Y2f = (np.sum(slots * ref, axis=1, **kwargs)
                          for ref in references)
    return QuadratureFrames(X1f=X1f, Y1f=Y1f, X2f=X2f, Y2f=Y2f,
                            slot_index=slot_index)


def demodulate_stream(
    stream: SampledWaveform,
    sched: MuxSchedule,
    phase: float = 0.0,
) -> QuadratureFrames:
    """Demodulate every slot of a stream.

    Parameters
    ----------
    stream :
        Whole number of `D`-sample slots, the first slot starting at the
        scan trigger.

    Returns
    -------
    QuadratureFrames
        One frame per slot, plain sums over the slot's samples.
    """
    n_slots = qpwms.mux.n_slots(len(stream), sched)
    references = make_references(sched.f_m, stream.f_d, sched.D, phase)
    slots = np.asarray(stream.samples, dtype=float).reshape(n_slots, sched.D)
    return accumulate_slots(slots, references, np.arange(1, n_slots + 1))


def normalize_2f1f(
    sig: Union[QuadratureFrame, QuadratureFrames],
    bg: Union[QuadratureFrame, QuadratureFrames],
) -> Union[float, np.ndarray]:
    """Background-subtracted, 1f-normalized 2f magnitude.

        S = sqrt((X2f/R1f - X2f0/R1f0)^2 + (Y2f/R1f - Y2f0/R1f0)^2)

    Raises
    ------
    UnusableSlotError
        Slots whose 1f magnitude vanishes in the signal or background.
    """
    R1f = np.hypot(sig.X1f, sig.Y1f)
    R1f_bg = np.hypot(bg.X1f, bg.Y1f)
    unusable = ~((R1f > 0) & (R1f_bg > 0))
    if np.any(unusable):
        raise UnusableSlotError(np.atleast_1d(sig.slot_index)[
            np.atleast_1d(unusable)])
    x = sig.X2f / R1f - bg.X2f / R1f_bg
    y = sig.Y2f / R1f - bg.Y2f / R1f_bg
    return np.sqrt(x**2 + y**2)


def slot_centers(slot_index: np.ndarray, sched: MuxSchedule,
                 t0: float = 0.0) -> np.ndarray:
    """Mid-slot instants (s)."""
    return t0 + (np.asarray(slot_index) - 0.5) * sched.D / sched.f_d


def select_portion(
    slot_index: np.ndarray,
    drive: LaserDriveConfig,
    sched: MuxSchedule,
    portion: str,
    t0: float = 0.0,
) -> np.ndarray:
    """Mask slots on the falling or rising half of the wavelength scan.

    A slot belongs to a half scan by the sign of the scan slope at its
    centre.
    """
    return portion_mask(slot_centers(slot_index, sched, t0), drive, portion)


def demultiplex(
    values: np.ndarray,
    slot_index: np.ndarray,
    N: int,
) -> List[HarmonicSpectrum]:
    """Hand the value of slot `j` to beam `beam_index(j, N)`, in order."""
    values = np.asarray(values)
    slot_index = np.asarray(slot_index)
    if len(values) != len(slot_index):
        raise ValueError(f"{len(values)} values for {len(slot_index)} slots")
    if len(values) % N != 0:
        raise ValueError(f"{len(values)} slots cannot be shared evenly "
                         f"between {N} beams")
    beams = qpwms.mux.beam_index(slot_index, N)
    return [
        HarmonicSpectrum(beam=beam, values=values[beams == beam],
                         slot_index=slot_index[beams == beam])
        for beam in range(1, N + 1)
    ]


def qp_background(
    backgrounds: Sequence[SampledWaveform],
    sched: MuxSchedule,
    phase: float = 0.0,
) -> QuadratureFrames:
    """Background frames of the multiplexed absorption-free intensities."""
    return demodulate_stream(qpwms.mux.multiplex(backgrounds, sched), sched,
                             phase)


def fp_background(
    backgrounds: Sequence[SampledWaveform],
    sched: MuxSchedule,
    phase: float = 0.0,
) -> List[QuadratureFrames]:
    """Background frames of each absorption-free intensity."""
    return [demodulate_stream(bg, sched, phase) for bg in backgrounds]


def run_qp_pipeline(
    beams: Sequence[SampledWaveform],
    backgrounds: Sequence[SampledWaveform],
    sched: MuxSchedule,
    drive: LaserDriveConfig,
    portion: str = "falling",
    phase: float = 0.0,
    background_frames: Optional[QuadratureFrames] = None,
) -> List[HarmonicSpectrum]:
    """Quasi-parallel spectra: one digitizer for `N` beams.

    Multiplex, demodulate, normalize against the background treated the
    same way, keep the scan `portion` and demultiplex.

    Parameters
    ----------
    background_frames :
        Precomputed `qp_background(backgrounds, ...)`, reused across runs.

    Returns
    -------
    list of HarmonicSpectrum
        One per beam, in beam order.
    """
    stream = qpwms.mux.multiplex(beams, sched)
    frames = demodulate_stream(stream, sched, phase)
    if background_frames is None:
        background_frames = qp_background(backgrounds, sched, phase)
    values = normalize_2f1f(frames, background_frames)
    mask = select_portion(frames.slot_index, drive, sched, portion,
                          stream.t0)
    spectra = demultiplex(values[mask], frames.slot_index[mask], sched.N)
    logger.debug(f"QP: {np.count_nonzero(mask)} of {len(frames)} slots, "
                 f"{len(spectra[0])} samples per beam")
    return spectra


def run_fp_pipeline(
    beams: Sequence[SampledWaveform],
    backgrounds: Sequence[SampledWaveform],
    sched: MuxSchedule,
    drive: LaserDriveConfig,
    portion: str = "falling",
    phase: float = 0.0,
    background_frames: Optional[Sequence[QuadratureFrames]] = None,
) -> List[HarmonicSpectrum]:
    """Fully parallel spectra: one digitizer per beam.

    Every beam is demodulated over every slot of its own stream; `sched.N`
    is ignored.
    """
    if len(beams) != len(backgrounds):
        raise ValueError(f"{len(beams)} beams but {len(backgrounds)} "
                         "backgrounds")
    if background_frames is None:
        background_frames = fp_background(backgrounds, sched, phase)
    spectra = []
    for beam, (waveform, bg_frames) in enumerate(
            zip(beams, background_frames), start=1):
        frames = demodulate_stream(waveform, sched, phase)
        values = normalize_2f1f(frames, bg_frames)
        mask = select_portion(frames.slot_index, drive, sched, portion,
                              waveform.t0)
        spectra.append(
            HarmonicSpectrum(beam=beam, values=values[mask],
                             slot_index=frames.slot_index[mask]))
    return spectra


def restrict_to_slots(spectrum: HarmonicSpectrum,
                      slot_index: np.ndarray) -> HarmonicSpectrum:
    """Values of `spectrum` at the given slots."""
    mask = np.isin(spectrum.slot_index, slot_index)
    return HarmonicSpectrum(beam=spectrum.beam,
                            values=spectrum.values[mask],
                            slot_index=spectrum.slot_index[mask])


def quantize_stream(
    waveform: SampledWaveform,
    adc_bits: int,
    full_scale: float,
) -> np.ndarray:
    """ADC codes of a waveform, two's-complement `adc_bits` wide.

    Returns
    -------
    int64[n]
        `round(sample / full_scale * (2^(adc_bits-1) - 1))`.
    """
    samples = np.asarray(waveform.samples, dtype=float)
    if np.any(np.abs(samples) > full_scale):
        raise FixedPointOverflowError(
            f"samples up to {np.max(np.abs(samples)):g} exceed the ADC full "
            f"scale {full_scale:g}")
    scale = 2**(adc_bits - 1) - 1
    return np.round(samples / full_scale * scale).astype(np.int64)


def _check_range(values: np.ndarray, bits: int, what: str) -> None:
    low, high = -2**(bits - 1), 2**(bits - 1) - 1
    if values.size and (np.min(values) < low or np.max(values) > high):
        raise FixedPointOverflowError(
            f"{what} overflows {bits} bits: range [{np.min(values)}, "
            f"{np.max(values)}]")


def fixed_point_demodulate(
    codes: np.ndarray,
    sched: MuxSchedule,
    fmt: FixedPointSpec,
    phase: float = 0.0,
) -> QuadratureFrames:
    """Bit-accurate integer lock-in.

    References are rounded to `ref_bits`, products kept at full width and
    accumulated over the slot, then exported by an arithmetic right shift
    (floor) of `fmt.shift` bits.

    Returns
    -------
    QuadratureFrames
        int64 quadratures, in units of `2^shift` code x reference LSBs.

    Raises
    ------
    FixedPointOverflowError
        Any value outside its declared width.
    """
    violations = fmt.violations(sched.D)
    if violations:
        raise ConfigurationError("invalid fixed-point format", violations)
    codes = np.asarray(codes)
    if not np.issubdtype(codes.dtype, np.integer):
        raise ValueError("fixed-point input must be integer codes")
    codes = codes.astype(np.int64)
    _check_range(codes, fmt.adc_bits, "input")

    n_slots = len(codes) // sched.D
    if n_slots * sched.D != len(codes):
        raise ValueError(f"{len(codes)} samples is not a whole number of "
                         f"{sched.D}-sample slots")
    references = [
        np.round(ref * fmt.ref_scale).astype(np.int64)
        for ref in make_references(sched.f_m, sched.f_d, sched.D, phase)
    ]
    slots = codes.reshape(n_slots, sched.D)
    frames = accumulate_slots(slots, references, np.arange(1, n_slots + 1),
                              dtype=np.int64)

    exported = []
    for name in ("X1f", "Y1f", "X2f", "Y2f"):
        accumulated = getattr(frames, name)
        _check_range(accumulated, fmt.acc_bits, f"{name} accumulator")
        shifted = accumulated >> fmt.shift
        _check_range(shifted, fmt.out_bits, f"{name} output")
        exported.append(shifted)
    return QuadratureFrames(*exported, slot_index=frames.slot_index)


def fixed_point_error_bound(fmt: FixedPointSpec, D: int,
                            max_abs_sample: float) -> float:
    """Worst-case gap between the rescaled fixed-point and float quadratures.

    The float demodulator runs on the same codes with unit references; the
    fixed-point output is rescaled by `2^shift / ref_scale`.
    """
    return D * (2**(1 - fmt.ref_bits) * max_abs_sample
                + 0.5 * 2**fmt.shift / fmt.ref_scale)


def frames_table(
    frames: QuadratureFrames,
    N: int,
    values: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    """Quadrature frames as a table (slot, beam, X1f, Y1f, X2f, Y2f, S2f1f).
    """
    if values is None:
        values = np.full(len(frames), np.nan)
    return pd.DataFrame({
        "slot": frames.slot_index,
        "beam": qpwms.mux.beam_index(frames.slot_index, N),
        "X1f": frames.X1f,
        "Y1f": frames.Y1f,
        "X2f": frames.X2f,
        "Y2f": frames.Y2f,
        "S2f1f": values,
    })
