"""Load and save line lists, spectra, frames, images and reports."""

import dataclasses
import json
import os
import pathlib
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from qpwms.lockin import HarmonicSpectrum
from qpwms.spectroscopy import AbsorptionLine
from qpwms.tomography import BeamGeometry, ConcentrationImage, PixelGrid


RESOURCES = pathlib.Path(__file__).parent / "resources"

SPECTRUM_COLUMNS = ["wavelength_index", "slot", "beam", "S2f1f"]

SINOGRAM_COLUMNS = ["beam", "angle_deg", "offset_cm", "absorbance"]


def bundled_path(name: str) -> pathlib.Path:
    """Path of a file shipped in the package resources."""
    return RESOURCES / name


def _read_csv(path: os.PathLike, **kwargs) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip",
                       **kwargs)


def _require_columns(df: pd.DataFrame, columns: Sequence[str],
                     path: os.PathLike) -> None:
    missing = [column for column in columns if column not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")


def load_line_list(path: os.PathLike) -> List[AbsorptionLine]:
    """Absorption lines, one per row, columns named after the fields of
    `AbsorptionLine`. Lines starting with '#' are comments."""
    df = _read_csv(path)
    fields = [field.name for field in dataclasses.fields(AbsorptionLine)]
    _require_columns(df, [field for field in fields if field != "T_ref"],
                     path)
    columns = [field for field in fields if field in df.columns]
    return [
        AbsorptionLine(**{column: float(row[column]) for column in columns})
        for _, row in df.iterrows()
    ]


def spectrum_path(directory: os.PathLike, scheme: str, beam: int,
                  run: int = 0) -> pathlib.Path:
    name = f"{scheme}_run{run:03d}_beam{beam:02d}.csv"
    return pathlib.Path(directory) / name


def spectrum_to_frame(spectrum: HarmonicSpectrum) -> pd.DataFrame:
    return pd.DataFrame({
        "wavelength_index": np.arange(len(spectrum)),
        "slot": spectrum.slot_index,
        "beam": spectrum.beam,
        "S2f1f": spectrum.values,
    })


def save_spectrum(path: os.PathLike, spectrum: HarmonicSpectrum) -> None:
    spectrum_to_frame(spectrum).to_csv(path, index=False)


def load_spectrum(path: os.PathLike) -> HarmonicSpectrum:
    df = _read_csv(path)
    _require_columns(df, SPECTRUM_COLUMNS, path)
    beams = df["beam"].unique()
    if len(beams) != 1:
        raise ValueError(f"{path}: expected a single beam, got {beams}")
    return HarmonicSpectrum(beam=int(beams[0]),
                            values=df["S2f1f"].to_numpy(dtype=float),
                            slot_index=df["slot"].to_numpy(dtype=int))


def load_spectra(directory: os.PathLike, scheme: str,
                 run: int = 0) -> List[HarmonicSpectrum]:
    """All beam spectra of a run saved in `directory`, by beam number."""
    paths = sorted(pathlib.Path(directory).glob(
        f"{scheme}_run{run:03d}_beam*.csv"))
    if not paths:
        raise FileNotFoundError(
            f"no {scheme.upper()} spectra of run {run} in {directory}")
    spectra = [load_spectrum(path) for path in paths]
    return sorted(spectra, key=lambda spectrum: spectrum.beam)


def save_frames(path: os.PathLike, frames: pd.DataFrame) -> None:
    frames.to_csv(path, index=False)


def load_frames(path: os.PathLike) -> pd.DataFrame:
    return _read_csv(path)


def _image_metadata_path(path: os.PathLike) -> pathlib.Path:
    return pathlib.Path(path).with_suffix(".json")


def save_image(path: os.PathLike, image: ConcentrationImage) -> None:
    """Save the grid as CSV, one row per pixel row from -y to +y, and its
    geometry in a JSON sidecar."""
    pd.DataFrame(image.values).to_csv(path, index=False, header=False)
    grid = image.grid
    metadata = dict(
        nx=grid.nx,
        ny=grid.ny,
        extent_cm=grid.extent,
        origin_cm=list(grid.origin),
        units="mole fraction",
        row_order="first row at the lowest y",
    )
    with open(_image_metadata_path(path), "w") as file:
        json.dump(metadata, file, indent=2)


def load_image(path: os.PathLike) -> ConcentrationImage:
    with open(_image_metadata_path(path)) as file:
        metadata = json.load(file)
    grid = PixelGrid(nx=metadata["nx"], ny=metadata["ny"],
                     extent=metadata["extent_cm"],
                     origin=tuple(metadata["origin_cm"]))
    values = pd.read_csv(path, header=None,
                         float_precision="round_trip").to_numpy(dtype=float)
    return ConcentrationImage(values=values, grid=grid)


def sinogram_frame(geom: BeamGeometry,
                   absorbances: np.ndarray) -> pd.DataFrame:
    if len(absorbances) != len(geom):
        raise ValueError(f"{len(absorbances)} absorbances for "
                         f"{len(geom)} beams")
    return pd.DataFrame({
        "beam": np.arange(1, len(geom) + 1),
        "angle_deg": geom.angles,
        "offset_cm": geom.offsets,
        "absorbance": absorbances,
    })


def save_sinogram(path: os.PathLike, geom: BeamGeometry,
                  absorbances: np.ndarray) -> None:
    sinogram_frame(geom, absorbances).to_csv(path, index=False)


def load_sinogram(path: os.PathLike) -> pd.DataFrame:
    df = _read_csv(path)
    _require_columns(df, SINOGRAM_COLUMNS, path)
    return df


def save_report(path: os.PathLike, report: pd.DataFrame) -> None:
    report.to_csv(path, index=False)


def load_report(path: os.PathLike) -> pd.DataFrame:
    return _read_csv(path, dtype={"beam": str})


def save_json(path: os.PathLike, data: Dict) -> None:
    with open(path, "w") as file:
        json.dump(data, file, indent=2)
