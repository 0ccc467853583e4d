"""End-to-end orchestration: band filter, robust fit, blind extraction.

The pipeline wires the three analysis stages together over CSV files,
writing every intermediate artifact so stage commands can reproduce a
full run file-for-file. All stages are deterministic; reports carry no
timestamps, so re-running a config overwrites outputs byte-identically.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

from contextlib import contextmanager

from . import io
from .core import SpectraMatrix, log_ratio
from .emd import BandpassReport, BandSelection, SiftConfig, bandpass_matrix
from .errors import ConfigError, DoasepError, GridError
from .ica import StabilityReport, stability_scan
from .robust import FitResult, HuberConfig, fit_report, irls_fit

__all__ = [
    "PipelineConfig",
    "PipelineReport",
    "run_pipeline",
    "parse_config_file",
    "parse_d_range",
]


@dataclass
class PipelineConfig:
    """Everything a run needs; every field maps 1:1 to a CLI flag."""

    input: str
    references: str
    out: str
    i0: str | None = None  # if absent, inputs are already log-ratio spectra
    library: str | None = None
    d_range: tuple[int, int] = (1, 5)
    match_threshold: float = 0.9
    sift: SiftConfig = field(default_factory=SiftConfig)
    band: BandSelection = field(default_factory=BandSelection)
    huber: HuberConfig = field(default_factory=HuberConfig)
    figures: bool = True

    def __post_init__(self):
        if self.d_range[0] < 1 or self.d_range[1] < self.d_range[0]:
            raise ConfigError(f"invalid d_range {self.d_range}")
        if not (0 < self.match_threshold <= 1):
            raise ConfigError(f"match_threshold must be in (0, 1], got {self.match_threshold}")


@dataclass
class PipelineReport:
    preprocessing: BandpassReport
    fit: FitResult
    stability: StabilityReport
    warnings: list[str] = field(default_factory=list)
    stage_seconds: dict[str, float] = field(default_factory=dict)


@contextmanager
def _stage(name: str):
    """Tag any stage failure with the stage it came from."""
    try:
        yield
    except DoasepError as exc:
        exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def parse_d_range(text) -> tuple[int, int]:
    """Accept "1:5", "1..5", or a single value "3"."""
    s = str(text).strip()
    for sep in (":", ".."):
        if sep in s:
            lo, hi = s.split(sep, 1)
            return (int(lo), int(hi))
    v = int(s)
    return (v, v)


def _preprocess(config: PipelineConfig):
    """Load input (and lamp), produce the band-filtered matrix."""
    spectra = io.load_spectra(config.input)
    if config.i0 is not None:
        lamp = io.load_spectra(config.i0)
        x = log_ratio(spectra, lamp)
    else:
        x = spectra
    return bandpass_matrix(x, config.sift, config.band)


def _stability_text(report: StabilityReport) -> str:
    lines = ["# stability scan", ""]
    lines.append(f"d values scanned: {', '.join(str(d) for d in report.d_values)}")
    lines.append(f"match threshold: {report.match_threshold}")
    flag = "yes" if report.has_structure else "no; no reliable non-Gaussian structure"
    lines.append(f"non-Gaussian structure detected: {flag}")
    lines.append("")
    for i, c in enumerate(report.clusters):
        lines.append(f"## component {i}")
        lines.append(f"persistence: {c.persistence:.4f}")
        matched = ", ".join(
            f"d={d}: {corr:.4f}" for d, corr in sorted(c.correlations.items())
        )
        lines.append(f"matched runs: {matched}")
        if c.best_reference is not None:
            lines.append(
                f"best library match: {c.best_reference} (corr {c.best_reference_corr:+.4f})"
            )
        lines.append("")
    return "\n".join(lines)


def _report_text(config: PipelineConfig, report: PipelineReport) -> str:
    lines = ["# pipeline report", ""]
    lines.append("## configuration")
    lines.append(f"input = {os.path.basename(config.input)}")
    lines.append(f"i0 = {os.path.basename(config.i0) if config.i0 else '(pre-logged input)'}")
    lines.append(f"references = {os.path.basename(config.references)}")
    lines.append(f"d_range = {config.d_range[0]}:{config.d_range[1]}")
    lines.append(f"match_threshold = {config.match_threshold}")
    lines.append(
        f"band = drop_fastest {config.band.drop_fastest}, drop_slowest {config.band.drop_slowest}"
    )
    lines.append(f"sd_threshold = {config.sift.sd_threshold}")
    lines.append(f"scale_mode = {config.huber.scale_mode}")
    lines.append(f"nonneg_mode = {config.huber.nonneg_mode}")
    lines.append("")
    lines.append("## preprocessing")
    for c in report.preprocessing.columns:
        lo, hi = c.retained
        periods = ", ".join(f"{p:.0f}" for p in c.retained_periods_px)
        fb = " (fallback: kept all IMFs)" if c.fallback else ""
        lines.append(
            f"column {c.label}: {c.n_imfs} IMFs, retained [{lo}:{hi}], "
            f"periods_px [{periods}]{fb}"
        )
    lines.append("")
    lines.append("## fit")
    lines.append(f"iterations per column: {' '.join(str(i) for i in report.fit.iterations)}")
    if report.fit.negativity_report:
        for gas, col, value in report.fit.negativity_report:
            lines.append(f"negative coefficient: gas {gas}, column {col}, value {value:.6g}")
    else:
        lines.append("negative coefficients: none")
    lines.append("")
    lines.append("## stability")
    pers = report.stability.persistent_clusters()
    lines.append(f"persistent components (>= 0.8): {len(pers)}")
    if not report.stability.has_structure:
        lines.append("flag: no reliable non-Gaussian structure")
    lines.append("")
    if report.warnings:
        lines.append("## warnings")
        lines.extend(report.warnings)
        lines.append("")
    return "\n".join(lines)


def write_fit_outputs(fit: FitResult, outdir: str) -> None:
    io.save_coefficients(
        fit.coefficients,
        fit.column_labels or [f"c{j}" for j in range(fit.coefficients.values.shape[1])],
        os.path.join(outdir, "coefficients.csv"),
    )
    io.save_spectra(fit.residuals, os.path.join(outdir, "residuals.csv"))
    with open(os.path.join(outdir, "fit_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(fit_report(fit))


def write_ica_outputs(stability: StabilityReport, outdir: str) -> None:
    with open(os.path.join(outdir, "stability_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(_stability_text(stability))
    if stability.clusters and stability.clusters[0].best_reference is not None:
        rows = [["component", "best_reference", "correlation"]]
        for i, c in enumerate(stability.clusters):
            rows.append([str(i), str(c.best_reference), repr(float(c.best_reference_corr))])
        io.write_rows(os.path.join(outdir, "match_table.csv"), rows)


def write_components_csv(R: SpectraMatrix, d_values, outdir: str) -> None:
    """One CSV of recovered spectra per component count (rows become columns)."""
    from .ica import jade

    for d in d_values:
        result = jade(R, d)
        mat = SpectraMatrix(
            R.grid,
            result.sources.T,
            [f"ic{i}" for i in range(result.sources.shape[0])],
        )
        io.save_spectra(mat, os.path.join(outdir, f"components_d{d}.csv"))


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Execute all stages and write every artifact under config.out.

    Each stage reads its input back from the file the previous stage
    wrote, so invoking the stage commands manually on each other's
    outputs reproduces a full run file-for-file.
    """
    outdir = io.ensure_outdir(config.out)
    warnings: list[str] = []
    timings: dict[str, float] = {}

    refs = io.load_references(config.references)
    probe = io.load_spectra(config.input)
    if not refs.grid.isclose(probe.grid):
        raise GridError(
            f"references grid {refs.grid} does not match spectra grid {probe.grid}"
        )

    t0 = time.perf_counter()
    xhat, pre_report = _preprocess(config)
    timings["preprocess"] = time.perf_counter() - t0
    io.save_spectra(xhat, os.path.join(outdir, "xhat.csv"))
    for label in pre_report.fallback_labels:
        warnings.append(f"preprocess: column {label}: too few IMFs, kept all (minus trend)")
    xhat = io.load_spectra(os.path.join(outdir, "xhat.csv"))

    t0 = time.perf_counter()
    fit = irls_fit(xhat, refs, config.huber)
    timings["fit"] = time.perf_counter() - t0
    write_fit_outputs(fit, outdir)
    for gas, col, value in fit.negativity_report:
        warnings.append(f"fit: column {col}: negative coefficient for {gas} ({value:.6g})")
    residuals = io.load_spectra(os.path.join(outdir, "residuals.csv"))

    t0 = time.perf_counter()
    library = io.load_spectra(config.library) if config.library else None
    d_values = range(config.d_range[0], config.d_range[1] + 1)
    stability = stability_scan(
        residuals, d_values, config.match_threshold, library=library
    )
    timings["ica"] = time.perf_counter() - t0
    if not stability.has_structure:
        warnings.append("ica: no reliable non-Gaussian structure in residuals")
    write_ica_outputs(stability, outdir)
    write_components_csv(residuals, d_values, outdir)

    report = PipelineReport(
        preprocessing=pre_report,
        fit=fit,
        stability=stability,
        warnings=warnings,
        stage_seconds=timings,
    )
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(_report_text(config, report))

    if config.figures:
        from . import plots

        plots.render_run_figures(xhat, fit, stability, outdir, components_grid=residuals.grid)
    return report


_BOOL_KEYS = {"figures"}
_INT_KEYS = {"max_imfs", "max_sift_iters", "boundary", "drop_fastest", "drop_slowest", "max_iters"}
_FLOAT_KEYS = {
    "sd_threshold",
    "tuning_multiplier",
    "fixed_sigma",
    "rel_tol",
    "match_threshold",
}
_STR_KEYS = {"input", "references", "out", "i0", "library", "scale_mode", "nonneg_mode"}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "d_range":
                values[key] = parse_d_range(value)
            elif key in _BOOL_KEYS:
                values[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def build_config(values: dict) -> PipelineConfig:
    """Assemble a PipelineConfig from flat key/value pairs."""
    for required in ("input", "references", "out"):
        if not values.get(required):
            raise ConfigError(f"missing required setting {required!r}")
    sift = SiftConfig(
        max_imfs=values.get("max_imfs", 10),
        max_sift_iters=values.get("max_sift_iters", 100),
        sd_threshold=values.get("sd_threshold", 0.2),
        boundary=values.get("boundary", 2),
    )
    band = BandSelection(
        drop_fastest=values.get("drop_fastest", 1),
        drop_slowest=values.get("drop_slowest", 1),
    )
    huber = HuberConfig(
        tuning_multiplier=values.get("tuning_multiplier", 1.345),
        scale_mode=values.get("scale_mode", "mad"),
        fixed_sigma=values.get("fixed_sigma", 1.0),
        max_iters=values.get("max_iters", 100),
        rel_tol=values.get("rel_tol", 1e-8),
        nonneg_mode=values.get("nonneg_mode", "monitor"),
    )
    return PipelineConfig(
        input=values["input"],
        references=values["references"],
        out=values["out"],
        i0=values.get("i0"),
        library=values.get("library"),
        d_range=values.get("d_range", (1, 5)),
        match_threshold=values.get("match_threshold", 0.9),
        sift=sift,
        band=band,
        huber=huber,
        figures=values.get("figures", True),
    )
