"""CSV reading and writing for spectra files.

One schema everywhere: UTF-8, LF line endings, header row
``wavelength_nm,<label1>,...``, wavelength in the first column on a uniform
grid, one data column per measurement (or per gas, for reference files).
Floats are written with shortest round-trip precision so a save/load cycle
is exact.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .core import CoefficientMatrix, CrossSection, ReferenceSet, SpectraMatrix, WavelengthGrid
from .errors import GridError, IoError, ParseError

__all__ = [
    "load_spectra",
    "save_spectra",
    "load_references",
    "save_references",
    "load_coefficients",
    "save_coefficients",
    "write_rows",
    "load_cross_section",
]

UNIFORM_STEP_RTOL = 1e-6


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return [row for row in csv.reader(fh)]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _parse_table(path):
    """Shared parser: returns (grid, p x n values, labels)."""
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise ParseError(f"{path}: header needs a wavelength column plus at least one data column")
    labels = [h.strip() for h in header[1:]]
    data_rows = [r for r in rows[1:] if r and any(cell.strip() for cell in r)]
    if len(data_rows) < 2:
        raise ParseError(f"{path}: fewer than 2 data rows")
    p = len(data_rows)
    n = len(labels)
    wl = np.empty(p)
    values = np.empty((p, n))
    for i, row in enumerate(data_rows):
        if len(row) != n + 1:
            raise ParseError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {n + 1}"
            )
        for j, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at row {i + 2}, column {j + 1}"
                ) from None
            if j == 0:
                wl[i] = x
            else:
                values[i, j - 1] = x

    steps = np.diff(wl)
    if np.any(steps <= 0):
        raise GridError(f"{path}: wavelengths must be strictly increasing")
    step = (wl[-1] - wl[0]) / (p - 1)
    if np.max(np.abs(steps - step)) > UNIFORM_STEP_RTOL * step:
        worst = int(np.argmax(np.abs(steps - step)))
        raise GridError(
            f"{path}: non-uniform wavelength grid (step {steps[worst]:.9g} at row "
            f"{worst + 2} vs mean step {step:.9g})"
        )
    grid = WavelengthGrid(start_nm=float(wl[0]), step_nm=float(step), pixels=p)
    return grid, values, labels


def load_spectra(path) -> SpectraMatrix:
    """Read a spectra CSV into a SpectraMatrix."""
    grid, values, labels = _parse_table(path)
    return SpectraMatrix(grid, values, labels)


def load_references(path) -> ReferenceSet:
    """Read a reference CSV (one column per gas) into a ReferenceSet."""
    grid, values, labels = _parse_table(path)
    return ReferenceSet(grid, values, labels)


def load_cross_section(path) -> CrossSection:
    """Read a tabulated cross section (first data column) from a spectra CSV."""
    grid, values, _ = _parse_table(path)
    return CrossSection(grid, values[:, 0])


def _fmt(x: float) -> str:
    return repr(float(x))


def write_rows(path, rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(",".join(row))
                fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_spectra(matrix: SpectraMatrix, path) -> None:
    """Write a SpectraMatrix; load_spectra reads it back exactly."""
    wl = matrix.grid.wavelengths()
    rows = [["wavelength_nm", *matrix.column_labels]]
    for i in range(matrix.n_pixels):
        rows.append([_fmt(wl[i])] + [_fmt(v) for v in matrix.values[i]])
    write_rows(path, rows)


def save_references(refs: ReferenceSet, path) -> None:
    wl = refs.grid.wavelengths()
    rows = [["wavelength_nm", *refs.gas_names]]
    for i in range(refs.grid.pixels):
        rows.append([_fmt(wl[i])] + [_fmt(v) for v in refs.references[i]])
    write_rows(path, rows)


def save_coefficients(coeffs: CoefficientMatrix, column_labels, path) -> None:
    """Write an m x n coefficient table: one row per gas."""
    labels = [str(c) for c in column_labels]
    if len(labels) != coeffs.values.shape[1]:
        raise IoError(
            f"{len(labels)} column labels for {coeffs.values.shape[1]} fitted columns"
        )
    rows = [["gas", *labels]]
    for g, name in enumerate(coeffs.gas_names):
        rows.append([name] + [_fmt(v) for v in coeffs.values[g]])
    write_rows(path, rows)


def load_coefficients(path) -> tuple[CoefficientMatrix, list[str]]:
    rows = _read_rows(path)
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header plus at least one gas row")
    labels = [h.strip() for h in rows[0][1:]]
    names = []
    values = []
    for i, row in enumerate(rows[1:]):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(labels) + 1:
            raise ParseError(f"{path}: row {i + 2} has {len(row)} cells")
        names.append(row[0])
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}: non-numeric cell in row {i + 2}") from exc
    return CoefficientMatrix(np.array(values), names), labels


def ensure_outdir(path) -> str:
    """Create an output directory if needed and return its path."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from exc
    return str(path)
