"""Semi-blind separation of absorption spectra.

Three stages: empirical-mode band filtering of the spectra, robust
Huber-norm unmixing against known reference spectra, and JADE blind
extraction of whatever structured absorbers remain in the residuals.
A seeded synthetic-spectrum generator provides ground truth for tests
and demos.
"""

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
    log_ratio,
    log_transform,
    resample,
)
from .emd import (
    BandSelection,
    ImfStack,
    SiftConfig,
    bandpass_matrix,
    decompose,
    envelope,
    find_extrema,
    sift,
)
from .ica import (
    IcaResult,
    StabilityReport,
    WhiteningResult,
    amari_index,
    center_whiten,
    cumulant_matrices,
    jade,
    joint_diagonalize,
    match_component,
    stability_scan,
)
from .io import load_references, load_spectra, save_references, save_spectra
from .pipeline import PipelineConfig, PipelineReport, run_pipeline
from .robust import (
    FitResult,
    HuberConfig,
    huber_loss,
    huber_weight,
    irls_fit,
    ols_fit,
    robust_scale,
)
from .synth import GasModel, SceneConfig, demo_scene, make_truth_bundle, simulate_intensity

__version__ = "0.1.0"

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
    "load_spectra",
    "save_spectra",
    "load_references",
    "save_references",
    "SiftConfig",
    "BandSelection",
    "ImfStack",
    "find_extrema",
    "envelope",
    "sift",
    "decompose",
    "bandpass_matrix",
    "HuberConfig",
    "FitResult",
    "huber_loss",
    "huber_weight",
    "robust_scale",
    "irls_fit",
    "ols_fit",
    "WhiteningResult",
    "IcaResult",
    "StabilityReport",
    "center_whiten",
    "cumulant_matrices",
    "joint_diagonalize",
    "jade",
    "stability_scan",
    "match_component",
    "amari_index",
    "GasModel",
    "SceneConfig",
    "simulate_intensity",
    "make_truth_bundle",
    "demo_scene",
    "PipelineConfig",
    "PipelineReport",
    "run_pipeline",
    "__version__",
]
