"""Figure rendering for pipeline and stage outputs.

PNG files are written next to the CSV artifacts. Rendering is
deterministic (fixed figure geometry, no timestamps in PNG metadata), so
repeated runs produce byte-identical images.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import SpectraMatrix
from .ica import StabilityReport
from .robust import FitResult

__all__ = [
    "render_spectra",
    "render_fit_figures",
    "render_component_figures",
    "render_run_figures",
]

_DPI = 110


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_spectra(matrix: SpectraMatrix, path: str, title: str, max_columns: int = 6) -> None:
    """Overlay up to max_columns spectra against wavelength."""
    wl = matrix.grid.wavelengths()
    fig, ax = plt.subplots(figsize=(9, 4))
    step = max(1, matrix.n_columns // max_columns)
    for j in range(0, matrix.n_columns, step):
        ax.plot(wl, matrix.values[:, j], lw=0.8, label=matrix.column_labels[j])
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("value")
    ax.set_title(title)
    if matrix.n_columns <= 12:
        ax.legend(fontsize=7, ncol=3)
    fig.tight_layout()
    _save(fig, path)


def render_fit_figures(fit: FitResult, outdir: str) -> None:
    """Coefficient series per gas plus one residual spectrum."""
    coeffs = fit.coefficients
    n = coeffs.values.shape[1]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = np.arange(n)
    for g, name in enumerate(coeffs.gas_names):
        ax.plot(xs, coeffs.values[g], marker="o", ms=3, lw=1, label=name)
    ax.set_xlabel("measurement index")
    ax.set_ylabel("fitted coefficient")
    ax.set_title("robust fit coefficients")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, os.path.join(outdir, "coefficients.png"))

    mid = fit.residuals.n_columns // 2
    wl = fit.residuals.grid.wavelengths()
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(wl, fit.residuals.values[:, mid], lw=0.7, color="#444444")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("residual")
    ax.set_title(f"fit residual, column {fit.residuals.column_labels[mid]}")
    fig.tight_layout()
    _save(fig, os.path.join(outdir, "residual.png"))


def render_component_figures(stability: StabilityReport, grid, outdir: str) -> None:
    """Candidate hidden spectra sorted by persistence."""
    if not stability.clusters:
        return
    order = sorted(
        range(len(stability.clusters)),
        key=lambda i: -stability.clusters[i].persistence,
    )
    k = len(order)
    wl = grid.wavelengths()
    fig, axes = plt.subplots(k, 1, figsize=(9, 1.9 * k), sharex=True, squeeze=False)
    for row, i in enumerate(order):
        c = stability.clusters[i]
        ax = axes[row, 0]
        ax.plot(wl, c.representative, lw=0.8)
        label = f"component {i}, persistence {c.persistence:.2f}"
        if c.best_reference is not None:
            label += f", best match {c.best_reference} ({c.best_reference_corr:+.2f})"
        ax.set_title(label, fontsize=8)
    axes[-1, 0].set_xlabel("wavelength (nm)")
    fig.tight_layout()
    _save(fig, os.path.join(outdir, "components.png"))


def render_run_figures(
    xhat: SpectraMatrix,
    fit: FitResult,
    stability: StabilityReport,
    outdir: str,
    components_grid=None,
) -> None:
    render_spectra(xhat, os.path.join(outdir, "preprocessed.png"), "band-filtered spectra")
    render_fit_figures(fit, outdir)
    render_component_figures(stability, components_grid or xhat.grid, outdir)
