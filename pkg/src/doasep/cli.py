"""Command-line interface.

Subcommands mirror the pipeline stages so they can be composed manually:

    doasep synth  --out scene/              generate a synthetic scene
    doasep run    --input ... --references ... --out run/
    doasep emd    --input ... --out stage/  band filter only
    doasep fit    --input xhat.csv --references ... --out stage/
    doasep ica    --input residuals.csv --out stage/

Every flag of ``run`` maps 1:1 to a config-file key (flat ``key = value``
format); flags override the file. Exit codes: 0 success, 1 stage error,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import io
from .core import SpectraMatrix, log_ratio
from .emd import BandSelection, SiftConfig, bandpass_matrix
from .errors import DoasepError
from .ica import stability_scan
from .pipeline import (
    build_config,
    parse_config_file,
    parse_d_range,
    run_pipeline,
    write_components_csv,
    write_fit_outputs,
    write_ica_outputs,
)
from .robust import HuberConfig, irls_fit
from .synth import demo_scene, make_truth_bundle

PIPELINE_FLAG_KEYS = [
    "input",
    "i0",
    "references",
    "library",
    "out",
    "match_threshold",
    "max_imfs",
    "max_sift_iters",
    "sd_threshold",
    "boundary",
    "drop_fastest",
    "drop_slowest",
    "tuning_multiplier",
    "scale_mode",
    "fixed_sigma",
    "max_iters",
    "rel_tol",
    "nonneg_mode",
]


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_sift_band_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-imfs", type=int, default=None, help="IMF cap per column (default 10)")
    p.add_argument("--max-sift-iters", type=int, default=None, help="sift iteration cap (default 100)")
    p.add_argument("--sd-threshold", type=float, default=None, help="sift stopping ratio (default 0.2)")
    p.add_argument("--boundary", type=int, default=None, help="mirrored extrema per end (default 2)")
    p.add_argument("--drop-fastest", type=int, default=None, help="fast IMFs to drop (default 1)")
    p.add_argument("--drop-slowest", type=int, default=None, help="slow IMFs to drop besides the trend (default 1)")


def _add_huber_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tuning-multiplier", type=float, default=None, help="Huber k = multiplier * sigma (default 1.345)")
    p.add_argument("--scale-mode", choices=("mad", "fixed"), default=None, help="sigma estimate per iteration (default mad)")
    p.add_argument("--fixed-sigma", type=float, default=None, help="sigma for --scale-mode fixed")
    p.add_argument("--max-iters", type=int, default=None, help="IRLS iteration cap (default 100)")
    p.add_argument("--rel-tol", type=float, default=None, help="coefficient convergence tolerance (default 1e-8)")
    p.add_argument("--nonneg-mode", choices=("monitor", "project"), default=None, help="negative coefficient handling (default monitor)")


def _add_figures_flag(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--figures", dest="figures", action="store_true", default=None, help="render PNG figures (default)")
    g.add_argument("--no-figures", dest="figures", action="store_false", default=None, help="skip figure rendering")


def _sift_from(args) -> SiftConfig:
    return SiftConfig(
        max_imfs=args.max_imfs if args.max_imfs is not None else 10,
        max_sift_iters=args.max_sift_iters if args.max_sift_iters is not None else 100,
        sd_threshold=args.sd_threshold if args.sd_threshold is not None else 0.2,
        boundary=args.boundary if args.boundary is not None else 2,
    )


def _band_from(args) -> BandSelection:
    return BandSelection(
        drop_fastest=args.drop_fastest if args.drop_fastest is not None else 1,
        drop_slowest=args.drop_slowest if args.drop_slowest is not None else 1,
    )


def _huber_from(args) -> HuberConfig:
    return HuberConfig(
        tuning_multiplier=args.tuning_multiplier if args.tuning_multiplier is not None else 1.345,
        scale_mode=args.scale_mode if args.scale_mode is not None else "mad",
        fixed_sigma=args.fixed_sigma if args.fixed_sigma is not None else 1.0,
        max_iters=args.max_iters if args.max_iters is not None else 100,
        rel_tol=args.rel_tol if args.rel_tol is not None else 1e-8,
        nonneg_mode=args.nonneg_mode if args.nonneg_mode is not None else "monitor",
    )


def cmd_run(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    for key in PIPELINE_FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.d_range is not None:
        values["d_range"] = parse_d_range(args.d_range)
    if args.figures is not None:
        values["figures"] = args.figures
    config = build_config(values)
    report = run_pipeline(config)
    pers = report.stability.persistent_clusters()
    print(f"pipeline finished; artifacts in {config.out}")
    for stage, seconds in report.stage_seconds.items():
        print(f"  {stage}: {seconds:.2f} s")
    print(f"  persistent components: {len(pers)}")
    for w in report.warnings:
        print(f"  warning: {w}")
    return 0


def cmd_synth(args) -> int:
    values = {}
    if args.scene:
        values = _parse_scene_file(args.scene)
    overrides = {
        "seed": args.seed,
        "n_measurements": args.n,
        "noise_sigma": args.noise_sigma,
        "no2_peak_depth": args.no2_peak_depth,
        "hono_peak_depth": args.hono_peak_depth,
        "o3_peak_depth": args.o3_peak_depth,
        "outlier_rate": args.outlier_rate,
        "outlier_magnitude": args.outlier_magnitude,
        "slit_fwhm_nm": args.slit_fwhm,
        "path_length_cm": args.path_length,
    }
    for key, v in overrides.items():
        if v is not None:
            values[key] = v
    if args.hidden is not None:
        values["hidden_gases"] = tuple(s for s in args.hidden.split(",") if s)
    scene = demo_scene(**values)
    bundle = make_truth_bundle(scene)
    outdir = io.ensure_outdir(args.out)
    io.save_spectra(bundle.intensities, os.path.join(outdir, "intensities.csv"))
    io.save_spectra(bundle.lamp, os.path.join(outdir, "lamp.csv"))
    io.save_references(bundle.references, os.path.join(outdir, "references.csv"))
    io.save_coefficients(
        bundle.true_coefficients,
        bundle.intensities.column_labels,
        os.path.join(outdir, "truth_S.csv"),
    )
    for name, spectrum in bundle.hidden:
        mat = SpectraMatrix(bundle.intensities.grid, spectrum.reshape(-1, 1), [name])
        io.save_spectra(mat, os.path.join(outdir, f"hidden_{name}.csv"))
    print(f"scene written to {outdir} ({bundle.intensities.n_columns} measurements, "
          f"{len(bundle.hidden)} hidden gas(es))")
    return 0


_SCENE_KEYS = {
    "seed": int,
    "n_measurements": int,
    "noise_sigma": float,
    "no2_peak_depth": float,
    "hono_peak_depth": float,
    "o3_peak_depth": float,
    "outlier_rate": float,
    "outlier_magnitude": float,
    "slit_fwhm_nm": float,
    "path_length_cm": float,
}


def _parse_scene_file(path) -> dict:
    from .errors import ConfigError

    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "hidden":
                values["hidden_gases"] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key in _SCENE_KEYS:
                values[key] = _SCENE_KEYS[key](value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown scene key {key!r}")
    return values


def cmd_emd(args) -> int:
    outdir = io.ensure_outdir(args.out)
    spectra = io.load_spectra(args.input)
    if args.i0:
        spectra = log_ratio(spectra, io.load_spectra(args.i0))
    sift = _sift_from(args)
    band = _band_from(args)
    xhat, report = bandpass_matrix(spectra, sift, band)
    io.save_spectra(xhat, os.path.join(outdir, "xhat.csv"))
    if args.dump_imfs:
        wl = spectra.grid.wavelengths()
        for col in report.columns:
            rows = [["wavelength_nm"] + [f"imf{i+1}" for i in range(col.stack.n_imfs)] + ["trend"]]
            for i in range(spectra.n_pixels):
                row = [repr(float(wl[i]))]
                row += [repr(float(imf[i])) for imf in col.stack.imfs]
                row.append(repr(float(col.stack.trend[i])))
                rows.append(row)
            io.write_rows(os.path.join(outdir, f"imfs_{col.label}.csv"), rows)
    for col in report.columns:
        lo, hi = col.retained
        fb = " fallback" if col.fallback else ""
        periods = ", ".join(f"{p:.0f}" for p in col.retained_periods_px)
        print(f"column {col.label}: {col.n_imfs} IMFs, retained [{lo}:{hi}] "
              f"(periods px: {periods}){fb}")
    if args.figures is None or args.figures:
        from . import plots

        xhat_loaded = io.load_spectra(os.path.join(outdir, "xhat.csv"))
        plots.render_spectra(
            xhat_loaded, os.path.join(outdir, "preprocessed.png"), "band-filtered spectra"
        )
    return 0


def cmd_fit(args) -> int:
    outdir = io.ensure_outdir(args.out)
    xhat = io.load_spectra(args.input)
    refs = io.load_references(args.references)
    result = irls_fit(xhat, refs, _huber_from(args))
    write_fit_outputs(result, outdir)
    print(f"fitted {len(refs.gas_names)} gases over {xhat.n_columns} columns; "
          f"negative coefficients: {len(result.negativity_report)}")
    if args.figures is None or args.figures:
        from . import plots

        plots.render_fit_figures(result, outdir)
    return 0


def cmd_ica(args) -> int:
    outdir = io.ensure_outdir(args.out)
    residuals = io.load_spectra(args.input)
    library = io.load_spectra(args.library) if args.library else None
    lo, hi = parse_d_range(args.d_range if args.d_range is not None else "1:5")
    threshold = args.match_threshold if args.match_threshold is not None else 0.9
    report = stability_scan(residuals, range(lo, hi + 1), threshold, library=library)
    write_ica_outputs(report, outdir)
    write_components_csv(residuals, range(lo, hi + 1), outdir)
    pers = report.persistent_clusters()
    print(f"scanned d = {lo}..{hi}; persistent components: {len(pers)}")
    if not report.has_structure:
        print("flag: no reliable non-Gaussian structure")
    if args.figures is None or args.figures:
        from . import plots

        plots.render_component_figures(report, residuals.grid, outdir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doasep",
        description="Semi-blind separation of absorption spectra: band filter, "
        "robust unmixing, blind extraction of hidden absorbers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: band filter, fit, blind extraction")
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--input", help="spectra CSV (wavelength_nm + one column per measurement)")
    p.add_argument("--i0", help="lamp spectrum CSV; if given, x = ln(I/I0), else input is pre-logged")
    p.add_argument("--references", help="reference CSV (one column per gas, band-filtered)")
    p.add_argument("--library", help="reference library CSV for labelling recovered components")
    p.add_argument("--out", help="output directory")
    p.add_argument("--d-range", help="component counts to scan, e.g. 1:5")
    p.add_argument("--match-threshold", type=float, default=None, help="clustering correlation gate (default 0.9)")
    _add_sift_band_flags(p)
    _add_huber_flags(p)
    _add_figures_flag(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic three-absorber scene with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scene", help="scene config file (flat key = value)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--n", type=int, default=None, help="number of measurements (default 11)")
    p.add_argument("--hidden", default=None, help="comma-separated gases to hide, e.g. o3_like,hono_like")
    p.add_argument("--noise-sigma", type=float, default=None, help="log-space noise sigma (default 2e-3)")
    p.add_argument("--no2-peak-depth", type=float, default=None, help="max optical depth of the strong absorber (default 0.016)")
    p.add_argument("--hono-peak-depth", type=float, default=None, help="max optical depth of the moderate absorber (default 0.03)")
    p.add_argument("--o3-peak-depth", type=float, default=None, help="max optical depth of the weak absorber (default 0.03)")
    p.add_argument("--outlier-rate", type=float, default=None, help="fraction of pixels hit by gross outliers (default 0)")
    p.add_argument("--outlier-magnitude", type=float, default=None, help="outlier size in log space (default 0)")
    p.add_argument("--slit-fwhm", type=float, default=None, help="slit FWHM in nm, 0 for none (default 0.15)")
    p.add_argument("--path-length", type=float, default=None, help="optical path in cm (default 5200)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("emd", help="band-filter a spectra file (writes xhat.csv)")
    p.add_argument("--input", required=True)
    p.add_argument("--i0", help="lamp spectrum CSV applied as x = ln(I/I0)")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-imfs", action="store_true", help="write per-column IMF tables")
    _add_sift_band_flags(p)
    _add_figures_flag(p)
    p.set_defaults(func=cmd_emd)

    p = sub.add_parser("fit", help="robust Huber fit of band-filtered spectra")
    p.add_argument("--input", required=True, help="band-filtered spectra CSV (xhat.csv)")
    p.add_argument("--references", required=True)
    p.add_argument("--out", required=True)
    _add_huber_flags(p)
    _add_figures_flag(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ica", help="blind extraction from a residual file")
    p.add_argument("--input", required=True, help="residual spectra CSV (residuals.csv)")
    p.add_argument("--library", help="reference library CSV for labelling components")
    p.add_argument("--out", required=True)
    p.add_argument("--d-range", default=None, help="component counts to scan, e.g. 1:5 (default)")
    p.add_argument("--match-threshold", type=float, default=None)
    _add_figures_flag(p)
    p.set_defaults(func=cmd_ica)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DoasepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
