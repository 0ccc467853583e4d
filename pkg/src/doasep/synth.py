"""Forward model for synthetic absorption scenes.

Intensities follow the Beer-Lambert law on the instrument grid: a smooth
lamp spectrum times exp(-tau), where tau sums gas cross sections scaled
by number density and path length plus a broad extinction background.
The result is convolved with the slit kernel, then Gaussian noise (and
optional sparse outliers) is added in log space. Every draw is seeded,
so identical configs produce bit-identical scenes.

Lamp and background shapes are polynomials in the scaled coordinate
u = 2 * (lambda - mid) / span, which keeps coefficients O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CoefficientMatrix,
    CrossSection,
    ReferenceSet,
    SlitFunction,
    SpectraMatrix,
    WavelengthGrid,
    convolve_instrument,
    delta_slit,
    gaussian_slit,
    resample,
)
from .emd import BandSelection, SiftConfig, bandpass_matrix
from .errors import ConfigError

__all__ = [
    "GasModel",
    "SceneConfig",
    "TruthBundle",
    "simulate_intensity",
    "lamp_spectrum",
    "make_truth_bundle",
    "demo_scene",
]


@dataclass(frozen=True, eq=False)
class GasModel:
    """One absorber: its cross section shape and concentration history.

    The shape is either a parametric comb of Gaussian peaks
    ((center_nm, width_nm, amplitude_cm2), ...) or a tabulated
    CrossSection. ``known`` marks gases whose reference spectrum is
    handed to the fit; the rest stay hidden and must be recovered blind.
    """

    name: str
    concentrations: tuple[float, ...]
    peaks: tuple[tuple[float, float, float], ...] = ()
    cross_section: CrossSection | None = None
    known: bool = True

    def __post_init__(self):
        if not self.name:
            raise ConfigError("gas needs a name")
        if (len(self.peaks) == 0) == (self.cross_section is None):
            raise ConfigError(
                f"gas {self.name!r}: give either Gaussian peaks or a tabulated cross section"
            )
        if any(c < 0 for c in self.concentrations):
            raise ConfigError(f"gas {self.name!r}: concentrations must be >= 0")
        if any(w <= 0 for _, w, _ in self.peaks):
            raise ConfigError(f"gas {self.name!r}: peak widths must be > 0")

    def sigma_on(self, grid: WavelengthGrid) -> np.ndarray:
        """Cross section sampled on the instrument grid (cm^2/molecule)."""
        if self.cross_section is not None:
            return resample(self.cross_section, grid)
        wl = grid.wavelengths()
        sigma = np.zeros(grid.pixels)
        for center, width, amplitude in self.peaks:
            sigma += amplitude * np.exp(-0.5 * ((wl - center) / width) ** 2)
        return sigma


@dataclass(frozen=True, eq=False)
class SceneConfig:
    grid: WavelengthGrid = WavelengthGrid(340.0, 0.043, 1024)
    path_length_cm: float = 5200.0
    gases: tuple[GasModel, ...] = ()
    background: tuple[float, ...] = (0.0,)  # broad extinction, polynomial in u
    lamp: tuple[float, ...] = (1.0,)  # I0 shape, polynomial in u, must stay positive
    slit: SlitFunction = field(default_factory=delta_slit)
    noise_sigma: float = 0.0  # log-space Gaussian
    outlier_rate: float = 0.0
    outlier_magnitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.gases:
            raise ConfigError("scene needs at least one gas")
        if self.noise_sigma < 0 or self.outlier_rate < 0 or not (0 <= self.outlier_rate <= 1):
            raise ConfigError("noise_sigma must be >= 0 and outlier_rate in [0, 1]")
        if self.path_length_cm <= 0:
            raise ConfigError("path_length_cm must be > 0")
        n = len(self.gases[0].concentrations)
        for g in self.gases:
            if len(g.concentrations) != n:
                raise ConfigError(
                    f"gas {g.name!r} has {len(g.concentrations)} concentrations, others have {n}"
                )

    @property
    def n_measurements(self) -> int:
        return len(self.gases[0].concentrations)

    def scaled_coordinate(self) -> np.ndarray:
        wl = self.grid.wavelengths()
        mid = 0.5 * (wl[0] + wl[-1])
        return 2.0 * (wl - mid) / (wl[-1] - wl[0])

    def lamp_values(self) -> np.ndarray:
        lamp = np.polynomial.polynomial.polyval(self.scaled_coordinate(), self.lamp)
        if np.any(lamp <= 0):
            raise ConfigError("lamp polynomial must be positive over the grid")
        return lamp

    def background_values(self) -> np.ndarray:
        return np.polynomial.polynomial.polyval(self.scaled_coordinate(), self.background)


@dataclass(eq=False, repr=False)
class TruthBundle:
    intensities: SpectraMatrix
    references: ReferenceSet
    true_coefficients: CoefficientMatrix
    hidden: list[tuple[str, np.ndarray]]
    lamp: SpectraMatrix


def _measurement_labels(n: int) -> list[str]:
    return [f"m{j:02d}" for j in range(n)]


def simulate_intensity(config: SceneConfig) -> SpectraMatrix:
    """Beer-Lambert intensities for every measurement column."""
    lamp = config.lamp_values()
    bg = config.background_values()
    L = config.path_length_cm
    p = config.grid.pixels
    n = config.n_measurements
    sigmas = {g.name: g.sigma_on(config.grid) for g in config.gases}

    values = np.empty((p, n))
    for j in range(n):
        tau = bg.copy()
        for g in config.gases:
            tau += sigmas[g.name] * (g.concentrations[j] * L)
        intensity = lamp * np.exp(-tau)
        values[:, j] = convolve_instrument(intensity, config.slit)

    rng = np.random.default_rng(config.seed)
    if config.noise_sigma > 0:
        values = np.exp(np.log(values) + rng.normal(0.0, config.noise_sigma, size=values.shape))
    if config.outlier_rate > 0 and config.outlier_magnitude > 0:
        mask = rng.random(values.shape) < config.outlier_rate
        signs = rng.choice([-1.0, 1.0], size=values.shape)
        values = np.exp(np.log(values) + mask * signs * config.outlier_magnitude)
    return SpectraMatrix(config.grid, values, _measurement_labels(n))


def lamp_spectrum(config: SceneConfig) -> SpectraMatrix:
    """The noise-free lamp intensity (the I0 a real instrument records)."""
    lamp = convolve_instrument(config.lamp_values(), config.slit)
    return SpectraMatrix(config.grid, lamp.reshape(-1, 1), ["lamp"])


def _differential_structure(sigma, config: SceneConfig, sift: SiftConfig, band: BandSelection):
    """Reference prep: convolve with the slit, negate, band-filter."""
    convolved = convolve_instrument(np.asarray(sigma, dtype=float), config.slit)
    one_col = SpectraMatrix(config.grid, (-convolved).reshape(-1, 1), ["ref"])
    filtered, _ = bandpass_matrix(one_col, sift, band)
    return filtered.values[:, 0]


def make_truth_bundle(
    config: SceneConfig,
    sift: SiftConfig = SiftConfig(),
    ref_band: BandSelection = BandSelection(drop_fastest=0, drop_slowest=1),
) -> TruthBundle:
    """Scene plus everything needed to score a pipeline run against truth.

    References are the known gases' slit-convolved, negated, band-filtered
    cross-section structures; coefficients are column densities
    (concentration times path length); hidden gases' structures get the
    identical preparation so ICA components can be scored against them.
    Model structures carry no pixel-scale noise, so the reference band
    keeps every fast IMF by default and only strips the broad component.
    """
    known = [g for g in config.gases if g.known]
    hidden = [g for g in config.gases if not g.known]
    if not known:
        raise ConfigError("at least one gas must be flagged known")
    intensities = simulate_intensity(config)
    ref_cols = np.column_stack(
        [_differential_structure(g.sigma_on(config.grid), config, sift, ref_band) for g in known]
    )
    references = ReferenceSet(config.grid, ref_cols, [g.name for g in known])
    S = np.array([
        [c * config.path_length_cm for c in g.concentrations] for g in known
    ])
    truth = CoefficientMatrix(S, [g.name for g in known])
    hidden_structures = [
        (g.name, _differential_structure(g.sigma_on(config.grid), config, sift, ref_band))
        for g in hidden
    ]
    return TruthBundle(
        intensities=intensities,
        references=references,
        true_coefficients=truth,
        hidden=hidden_structures,
        lamp=lamp_spectrum(config),
    )


def alternating_comb(
    start_nm: float,
    spacing_nm: float,
    amplitude: float,
    width_fraction: float = 0.45,
    end_nm: float = 384.01,
):
    """Sign-alternating Gaussian peak comb spanning the window.

    Alternating signs give a quasi-symmetric oscillation with full period
    2 * spacing, which is what a differential absorption structure looks
    like after broad-band removal. Width tracks the spacing so the comb
    stays strongly oscillatory.
    """
    centers = np.arange(start_nm, end_nm, spacing_nm)
    return tuple(
        (float(c), width_fraction * spacing_nm, amplitude * (-1.0) ** i)
        for i, c in enumerate(centers)
    )


# cross-section comb amplitudes (cm^2/molecule); the weak absorber sits
# 100x below the strong one, emulating a gas probed far from its optimal
# wavelength range
STRONG_AMPLITUDE = 6.0e-19
MODERATE_AMPLITUDE = 2.4e-19
WEAK_AMPLITUDE = 6.0e-21


def demo_scene(
    seed: int = 0,
    n_measurements: int = 11,
    hidden_gases: tuple[str, ...] = ("o3_like",),
    noise_sigma: float = 2e-3,
    no2_peak_depth: float = 0.016,
    hono_peak_depth: float = 0.030,
    o3_peak_depth: float = 0.030,
    outlier_rate: float = 0.0,
    outlier_magnitude: float = 0.0,
    slit_fwhm_nm: float = 0.15,
    path_length_cm: float = 5200.0,
) -> SceneConfig:
    """Three-absorber scene over the 340-384 nm window.

    A strong decaying absorber ("no2_like"), a moderate one with a
    saturating growth curve ("hono_like"), and a weak one growing
    cubically ("o3_like") whose cross-section amplitude is 100x below the
    strong absorber; its optical depth is made visible by a high number
    density, the way an abundant gas shows up outside its optimal
    wavelength range. The distinct concentration histories keep the
    mixture full rank so hidden absorbers remain blind-separable. Gases
    named in ``hidden_gases`` are excluded from the reference set and
    must be recovered from fit residuals. ``*_peak_depth`` set each gas's
    maximum optical depth over the series.
    """
    r = np.linspace(0.0, 1.0, n_measurements)
    saturating = (1.0 - np.exp(-4.5 * r)) / (1.0 - np.exp(-4.5))
    no2 = GasModel(
        name="no2_like",
        peaks=alternating_comb(340.9, 2.05, STRONG_AMPLITUDE),
        concentrations=tuple(
            (no2_peak_depth / (STRONG_AMPLITUDE * path_length_cm)) * (1.0 - 0.44 * r)
        ),
        known="no2_like" not in hidden_gases,
    )
    hono = GasModel(
        name="hono_like",
        peaks=alternating_comb(341.5, 2.65, MODERATE_AMPLITUDE),
        concentrations=tuple(
            (hono_peak_depth / (MODERATE_AMPLITUDE * path_length_cm))
            * (0.14 + 0.86 * saturating)
        ),
        known="hono_like" not in hidden_gases,
    )
    o3 = GasModel(
        name="o3_like",
        peaks=alternating_comb(340.6, 3.35, WEAK_AMPLITUDE),
        concentrations=tuple(
            (o3_peak_depth / (WEAK_AMPLITUDE * path_length_cm)) * (0.12 + 0.88 * r**3)
        ),
        known="o3_like" not in hidden_gases,
    )
    return SceneConfig(
        gases=(no2, hono, o3),
        path_length_cm=path_length_cm,
        background=(0.012, -0.006, 0.009),
        lamp=(1.0, 0.04, -0.05),
        slit=gaussian_slit(slit_fwhm_nm, 0.043) if slit_fwhm_nm > 0 else delta_slit(),
        noise_sigma=noise_sigma,
        outlier_rate=outlier_rate,
        outlier_magnitude=outlier_magnitude,
        seed=seed,
    )
