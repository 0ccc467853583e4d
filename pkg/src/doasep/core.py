"""Shared data model for wavelength-gridded spectra.

Spectra live on a uniform wavelength grid (pixel-indexed, like a grating
spectrometer detector). All containers are immutable after construction:
arrays are copied in and marked read-only, so instances can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import DegenerateError, DomainError, GridError, KernelError, RangeError

__all__ = [
    "WavelengthGrid",
    "SpectraMatrix",
    "ReferenceSet",
    "CoefficientMatrix",
    "CrossSection",
    "SlitFunction",
    "gaussian_slit",
    "delta_slit",
    "log_transform",
    "log_ratio",
    "resample",
    "convolve_instrument",
]


def _readonly(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform wavelength axis: ``grid(i) = start_nm + i * step_nm``."""

    start_nm: float
    step_nm: float
    pixels: int

    def __post_init__(self):
        if not (self.step_nm > 0):
            raise GridError(f"step_nm must be positive, got {self.step_nm}")
        if self.pixels < 2:
            raise GridError(f"pixels must be >= 2, got {self.pixels}")

    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.pixels)

    @property
    def span_nm(self) -> float:
        return self.step_nm * (self.pixels - 1)

    def isclose(self, other: "WavelengthGrid", rtol: float = 1e-9) -> bool:
        """Tolerant equality, absorbing round-trip representation noise."""
        return (
            self.pixels == other.pixels
            and abs(self.start_nm - other.start_nm) <= rtol * max(1.0, abs(self.start_nm))
            and abs(self.step_nm - other.step_nm) <= rtol * self.step_nm
        )


def _check_grid_match(a: WavelengthGrid, b: WavelengthGrid, what: str) -> None:
    if not a.isclose(b):
        raise GridError(f"{what}: grids differ ({a} vs {b})")


@dataclass(frozen=True, eq=False, repr=False)
class SpectraMatrix:
    """p x n matrix of sampled spectra sharing one wavelength grid.

    Columns are individual measurements (labelled by ``column_labels``);
    rows are detector pixels. The same container carries raw intensities,
    log spectra, band-filtered spectra and fit residuals.
    """

    grid: WavelengthGrid
    values: np.ndarray
    column_labels: tuple[str, ...]

    def __init__(self, grid, values, column_labels=None):
        values = _readonly(values)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
            values.setflags(write=False)
        if values.ndim != 2:
            raise GridError(f"values must be 2-D, got ndim={values.ndim}")
        if values.shape[0] != grid.pixels:
            raise GridError(
                f"values have {values.shape[0]} rows but the grid has {grid.pixels} pixels"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("spectra values must all be finite")
        if column_labels is None:
            column_labels = tuple(f"c{j}" for j in range(values.shape[1]))
        labels = tuple(str(c) for c in column_labels)
        if len(labels) != values.shape[1]:
            raise GridError(
                f"{len(labels)} labels for {values.shape[1]} columns"
            )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_labels", labels)

    @property
    def n_pixels(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def with_values(self, values) -> "SpectraMatrix":
        """Same grid and labels, new numbers."""
        return SpectraMatrix(self.grid, values, self.column_labels)


@dataclass(frozen=True, eq=False, repr=False)
class ReferenceSet:
    """p x m matrix whose columns are reference spectra of known gases."""

    grid: WavelengthGrid
    references: np.ndarray
    gas_names: tuple[str, ...]

    def __init__(self, grid, references, gas_names):
        references = _readonly(references)
        if references.ndim == 1:
            references = references.reshape(-1, 1)
            references.setflags(write=False)
        if references.shape[0] != grid.pixels:
            raise GridError(
                f"references have {references.shape[0]} rows but the grid has {grid.pixels} pixels"
            )
        if not np.all(np.isfinite(references)):
            raise DomainError("reference values must all be finite")
        names = tuple(str(g) for g in gas_names)
        if len(names) != references.shape[1]:
            raise GridError(f"{len(names)} gas names for {references.shape[1]} columns")
        if len(names) < 1:
            raise GridError("a ReferenceSet needs at least one gas")
        if len(set(names)) != len(names):
            raise GridError(f"duplicate gas names: {names}")
        m = references.shape[1]
        for a in range(m):
            for b in range(a + 1, m):
                if np.array_equal(references[:, a], references[:, b]):
                    raise DegenerateError(
                        f"reference columns {names[a]!r} and {names[b]!r} are identical"
                    )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "references", references)
        object.__setattr__(self, "gas_names", names)

    @property
    def n_gases(self) -> int:
        return self.references.shape[1]


@dataclass(frozen=True, eq=False, repr=False)
class CoefficientMatrix:
    """m x n fitted coefficients, proportional to column densities."""

    values: np.ndarray
    gas_names: tuple[str, ...]

    def __init__(self, values, gas_names):
        values = _readonly(values)
        if values.ndim != 2:
            raise GridError(f"coefficients must be 2-D, got ndim={values.ndim}")
        if not np.all(np.isfinite(values)):
            raise DomainError("coefficients must all be finite")
        names = tuple(str(g) for g in gas_names)
        if len(names) != values.shape[0]:
            raise GridError(f"{len(names)} gas names for {values.shape[0]} rows")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gas_names", names)

    def negative_entries(self) -> list[tuple[str, int, float]]:
        """All strictly negative coefficients as (gas, column, value)."""
        gas_idx, col_idx = np.nonzero(self.values < 0)
        return [
            (self.gas_names[g], int(c), float(self.values[g, c]))
            for g, c in zip(gas_idx.tolist(), col_idx.tolist())
        ]


@dataclass(frozen=True, eq=False, repr=False)
class CrossSection:
    """Absorption cross section (cm^2/molecule) on its own, possibly finer, grid."""

    grid: WavelengthGrid
    sigma: np.ndarray

    def __init__(self, grid, sigma):
        sigma = _readonly(sigma)
        if sigma.ndim != 1 or sigma.shape[0] != grid.pixels:
            raise GridError(
                f"sigma must be 1-D with {grid.pixels} samples, got shape {sigma.shape}"
            )
        if not np.all(np.isfinite(sigma)):
            raise DomainError("cross section values must all be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True, eq=False, repr=False)
class SlitFunction:
    """Spectrometer response kernel: odd length, symmetric, unit sum."""

    kernel: np.ndarray
    fwhm_nm: float = 0.0

    def __init__(self, kernel, fwhm_nm=0.0):
        kernel = _readonly(kernel)
        if kernel.ndim != 1 or kernel.size % 2 == 0:
            raise KernelError(f"kernel must be 1-D with odd length, got shape {kernel.shape}")
        if abs(float(kernel.sum()) - 1.0) > 1e-9:
            raise KernelError(f"kernel sum deviates from 1 by {abs(float(kernel.sum()) - 1.0):.3e}")
        if np.max(np.abs(kernel - kernel[::-1])) > 1e-12:
            raise KernelError("kernel must be symmetric about its center")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "fwhm_nm", float(fwhm_nm))


def gaussian_slit(fwhm_nm: float, step_nm: float, half_width_sigmas: float = 4.0) -> SlitFunction:
    """Normalized Gaussian slit sampled on the instrument pixel spacing."""
    if fwhm_nm <= 0 or step_nm <= 0:
        raise KernelError("fwhm_nm and step_nm must be positive")
    sigma_px = fwhm_nm / (2.0 * np.sqrt(2.0 * np.log(2.0))) / step_nm
    half = max(1, int(np.ceil(half_width_sigmas * sigma_px)))
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_px) ** 2)
    k /= k.sum()
    return SlitFunction(k, fwhm_nm=fwhm_nm)


def delta_slit() -> SlitFunction:
    """Identity kernel (no instrumental smoothing)."""
    return SlitFunction(np.array([1.0]), fwhm_nm=0.0)


def log_transform(intensity: SpectraMatrix) -> SpectraMatrix:
    """Elementwise natural log of positive intensities; grid unchanged."""
    bad = intensity.values <= 0
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DomainError(
            f"non-positive intensity {intensity.values[i, j]} at pixel {i}, "
            f"column {intensity.column_labels[j]!r}"
        )
    return intensity.with_values(np.log(intensity.values))


def log_ratio(intensity: SpectraMatrix, lamp: SpectraMatrix) -> SpectraMatrix:
    """Per-column ln(I / I0).

    ``lamp`` may hold a single column (applied to every measurement) or one
    column per measurement.
    """
    _check_grid_match(intensity.grid, lamp.grid, "log_ratio")
    if lamp.n_columns not in (1, intensity.n_columns):
        raise GridError(
            f"lamp spectrum has {lamp.n_columns} columns, expected 1 or {intensity.n_columns}"
        )
    logged = log_transform(intensity)
    logged_lamp = log_transform(lamp)
    return logged.with_values(logged.values - logged_lamp.values)


def resample(cs: CrossSection, target: WavelengthGrid) -> np.ndarray:
    """Linear interpolation of a cross section onto the target pixels."""
    src = cs.grid.wavelengths()
    dst = target.wavelengths()
    lo, hi = src[0], src[-1]
    tol = 1e-9 * cs.grid.step_nm
    if dst[0] < lo - tol or dst[-1] > hi + tol:
        raise RangeError(
            f"target grid [{dst[0]:.6g}, {dst[-1]:.6g}] nm extends past the "
            f"cross section span [{lo:.6g}, {hi:.6g}] nm"
        )
    return np.interp(np.clip(dst, lo, hi), src, cs.sigma)


def convolve_instrument(cs_on_fine_grid, slit: SlitFunction) -> np.ndarray:
    """Convolve a sampled signal with the slit kernel (reflect boundary).

    Output length equals input length. The sign flip that turns a
    differential cross section into a reference spectrum is applied by the
    caller, not here.
    """
    signal = np.asarray(cs_on_fine_grid, dtype=float)
    if signal.ndim != 1:
        raise KernelError("signal must be 1-D")
    if slit.kernel.size > signal.size:
        raise KernelError(
            f"kernel support {slit.kernel.size} exceeds signal length {signal.size}"
        )
    return convolve1d(signal, slit.kernel, mode="reflect")
