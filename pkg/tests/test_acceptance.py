"""Acceptance suite: one test per shipped criterion.

Each test prints a [PASS] line with its measured runtime once its
assertions hold, so `pytest -s tests/test_acceptance.py` gives a
one-line verdict per criterion.
"""

import filecmp
import os
import time

import numpy as np
from scipy.optimize import linear_sum_assignment

from doasep.cli import main as cli_main
from doasep.core import ReferenceSet, SpectraMatrix, WavelengthGrid, log_ratio
from doasep.emd import bandpass_matrix, count_zero_crossings, decompose, find_extrema
from doasep.ica import amari_index, jade, match_component, stability_scan
from doasep.robust import HuberConfig, irls_fit, ols_fit
from doasep.synth import GasModel, SceneConfig, alternating_comb, demo_scene, make_truth_bundle


class Stopwatch:
    def __init__(self, limit_s):
        self.limit_s = limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc == (None, None, None):
            assert self.elapsed < self.limit_s, (
                f"runtime {self.elapsed:.2f}s exceeds {self.limit_s}s budget"
            )
        return False


def report(criterion, detail, watch):
    print(f"[PASS] criterion {criterion}: {detail} ({watch.elapsed:.2f}s)")


def test_criterion_1_robust_line_fit():
    """Huber line fit shrugs off gross outliers that wreck least squares."""
    with Stopwatch(1.0) as watch:
        rng = np.random.default_rng(1)
        n = 50
        x = np.linspace(0.0, 10.0, n)
        y = -2.0 * x + 10.0 + rng.normal(0.0, 0.6, n)
        idx = rng.choice(np.arange(n // 2), size=n // 10, replace=False)
        y[idx] -= 18.0
        grid = WavelengthGrid(0.0, 10.0 / (n - 1), n)
        refs = ReferenceSet(
            grid, np.column_stack([x, np.ones_like(x)]), ["slope", "intercept"]
        )
        data = SpectraMatrix(grid, y.reshape(-1, 1), ["y"])
        fit = irls_fit(data, refs, HuberConfig(require_centered_references=False))
        slope, intercept = fit.coefficients.values[:, 0]
        ols_slope, _ = ols_fit(data, refs).values[:, 0]
        assert abs(slope - (-2.0)) <= 0.1
        assert abs(intercept - 10.0) <= 0.5
        assert abs(ols_slope - (-2.0)) > 0.4
    report(
        1,
        f"huber ({slope:+.4f}, {intercept:+.4f}) vs OLS slope {ols_slope:+.4f}",
        watch,
    )


def test_criterion_2_emd_reconstruction():
    """50 seeded signals: exact reconstruction, valid IMF oscillation counts."""
    with Stopwatch(10.0) as watch:
        worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(100 + seed)
            length = int(rng.integers(256, 1025))
            t = np.arange(length, dtype=float)
            signal = np.zeros(length)
            for _ in range(int(rng.integers(2, 4))):
                period = rng.uniform(8.0, length / 4.0)
                signal += rng.uniform(0.5, 2.0) * np.sin(
                    2 * np.pi * t / period + rng.uniform(0, 2 * np.pi)
                )
            u = (t - length / 2) / length
            signal += rng.uniform(1.0, 5.0) * (u**2 + rng.uniform(-1, 1) * u)
            signal += rng.uniform(0.05, 0.3) * rng.normal(size=length)
            stack = decompose(signal)
            err = np.max(np.abs(signal - stack.reconstruct()))
            worst = max(worst, err / np.max(np.abs(signal)))
            assert err <= 1e-10 * np.max(np.abs(signal))
            for imf in stack.imfs:
                (mx, _), (mn, _) = find_extrema(imf)
                n_ext = mx.size + mn.size
                assert abs(n_ext - count_zero_crossings(imf)) <= 1
    report(2, f"50 signals reconstructed, worst rel err {worst:.2e}", watch)


def test_criterion_3_huber_matches_ols_for_huge_k():
    """With an effectively infinite crossover the robust fit is plain OLS."""
    with Stopwatch(1.0) as watch:
        grid = WavelengthGrid(340.0, 0.1, 300)
        t = np.arange(300)
        A = np.column_stack(
            [np.sin(2 * np.pi * t / 35.0), np.sin(2 * np.pi * t / 57.0 + 0.7)]
        )
        A -= A.mean(axis=0)
        refs = ReferenceSet(grid, A, ["a", "b"])
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            s_true = rng.uniform(0.5, 2.0, size=(2, 1))
            x = A @ s_true + rng.normal(0, 0.05, size=(300, 1))
            X = SpectraMatrix(grid, x)
            huge = HuberConfig(
                scale_mode="fixed", fixed_sigma=1e6 * float(np.max(np.abs(x)))
            )
            robust = irls_fit(X, refs, huge).coefficients.values
            ols = ols_fit(X, refs).values
            rel = np.max(np.abs(robust - ols) / np.abs(ols))
            worst = max(worst, rel)
            assert rel <= 1e-8
    report(3, f"20 problems, worst relative gap {worst:.2e}", watch)


def test_criterion_4_empirical_non_negativity():
    """Monitor-mode fits of valid scenes stay non-negative without a constraint."""
    with Stopwatch(30.0) as watch:
        grid = WavelengthGrid(340.0, 0.043, 1024)
        worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(2000 + seed)
            n = 4
            depth_a = rng.uniform(0.010, 0.030)
            depth_b = rng.uniform(0.010, 0.030)
            ga = GasModel(
                "gas_a",
                tuple((depth_a / (6e-19 * 5200)) * rng.uniform(0.4, 1.0, n)),
                alternating_comb(340.9, 2.05, 6.0e-19),
            )
            gb = GasModel(
                "gas_b",
                tuple((depth_b / (2.4e-19 * 5200)) * rng.uniform(0.4, 1.0, n)),
                alternating_comb(341.5, 2.65, 2.4e-19),
            )
            scene = SceneConfig(
                grid=grid,
                gases=(ga, gb),
                background=(0.012, -0.006, 0.009),
                lamp=(1.0, 0.04, -0.05),
                noise_sigma=2e-3,
                seed=seed,
            )
            bundle = make_truth_bundle(scene)
            x = log_ratio(bundle.intensities, bundle.lamp)
            xhat, _ = bandpass_matrix(x)
            fit = irls_fit(xhat, bundle.references, HuberConfig(nonneg_mode="monitor"))
            S = fit.coefficients.values
            floor = S.min() / S.max()
            worst = min(worst, floor) if seed else floor
            assert S.min() >= -1e-6 * S.max()
    report(4, f"50 scenes, worst min(S)/max(S) = {worst:.3e}", watch)


def _oracle_sources(rng, p):
    uniform = rng.uniform(-np.sqrt(3), np.sqrt(3), p)
    laplace = rng.laplace(0.0, 1.0 / np.sqrt(2.0), p)
    bimodal = rng.choice([-1.0, 1.0], p) + 0.2 * rng.normal(size=p)
    sparse = rng.normal(size=p) * (rng.random(p) < 0.25)
    S = np.vstack([uniform, laplace, bimodal, sparse])
    S -= S.mean(axis=1, keepdims=True)
    S /= S.std(axis=1, keepdims=True)
    return S


def test_criterion_5_jade_source_recovery():
    """4 non-Gaussian sources, random full-rank mixing, near-exact unmixing."""
    with Stopwatch(10.0) as watch:
        grid = WavelengthGrid(1.0, 1.0, 10_000)
        worst_corr, worst_amari = 1.0, 0.0
        for seed in range(10):
            rng = np.random.default_rng(300 + seed)
            S = _oracle_sources(rng, 10_000)
            mixing = rng.uniform(-1.0, 1.0, size=(4, 4))
            while np.linalg.cond(mixing) > 15.0:
                mixing = rng.uniform(-1.0, 1.0, size=(4, 4))
            R = SpectraMatrix(grid, (mixing @ S).T)
            result = jade(R, 4)
            corr = np.zeros((4, 4))
            for i in range(4):
                for j in range(4):
                    corr[i, j] = abs(match_component(result.sources[i], S[j]))
            rows, cols = linear_sum_assignment(-corr)
            matched = corr[rows, cols].min()
            index = amari_index(result.demixing @ mixing)
            worst_corr = min(worst_corr, matched)
            worst_amari = max(worst_amari, index)
            assert matched >= 0.99
            assert index <= 0.05
    report(
        5,
        f"10 seeds, min matched |corr| {worst_corr:.4f}, max Amari {worst_amari:.4f}",
        watch,
    )


def _hidden_gas_run(hidden, seed, d_range):
    scene = demo_scene(seed=seed, hidden_gases=hidden)
    bundle = make_truth_bundle(scene)
    x = log_ratio(bundle.intensities, bundle.lamp)
    xhat, _ = bandpass_matrix(x)
    fit = irls_fit(xhat, bundle.references)
    scan = stability_scan(fit.residuals, d_range)
    return bundle, fit, scan


def test_criterion_6_single_hidden_gas_recovery():
    """11 mixtures, 2 references known, the weak absorber found blind."""
    with Stopwatch(60.0) as watch:
        bundle, fit, scan = _hidden_gas_run(("o3_like",), seed=1, d_range=range(1, 6))
        persistent = scan.persistent_clusters()
        assert len(persistent) == 1
        truth = bundle.hidden[0][1]
        corr = match_component(persistent[0].representative, truth)
        assert abs(corr) >= 0.9
    report(6, f"one persistent cluster, |corr| vs hidden truth {abs(corr):.3f}", watch)


def test_criterion_7_two_hidden_gases_recovery():
    """Same mixtures, only one reference supplied; both absorbers recovered."""
    with Stopwatch(60.0) as watch:
        bundle, fit, scan = _hidden_gas_run(
            ("o3_like", "hono_like"), seed=1, d_range=range(1, 6)
        )
        persistent = scan.persistent_clusters()
        assert len(persistent) == 2
        matches = {}
        for name, truth in bundle.hidden:
            best = max(
                abs(match_component(c.representative, truth)) for c in persistent
            )
            matches[name] = best
            assert best >= 0.9
    report(
        7,
        "two persistent clusters, "
        + ", ".join(f"{k} |corr| {v:.3f}" for k, v in matches.items()),
        watch,
    )


def test_criterion_8_negative_control():
    """Fully explained scene: nothing persists; Gaussian residuals get flagged."""
    with Stopwatch(60.0) as watch:
        scene = demo_scene(
            seed=1,
            hidden_gases=(),
            noise_sigma=1e-3,
            no2_peak_depth=0.012,
            hono_peak_depth=0.012,
            o3_peak_depth=0.012,
        )
        bundle = make_truth_bundle(scene)
        x = log_ratio(bundle.intensities, bundle.lamp)
        xhat, _ = bandpass_matrix(x)
        fit = irls_fit(xhat, bundle.references)
        scan = stability_scan(fit.residuals, range(1, 6))
        assert len(scan.persistent_clusters()) == 0

        # flag mechanism on genuinely Gaussian residuals
        rng = np.random.default_rng(77)
        gauss = SpectraMatrix(scene.grid, rng.normal(size=(1024, 11)))
        gauss_scan = stability_scan(gauss, range(1, 6))
        assert not gauss_scan.has_structure
        assert len(gauss_scan.persistent_clusters()) == 0
    report(8, "no persistent cluster; Gaussian residuals flagged structure-free", watch)


def test_criterion_9_determinism_and_composability(tmp_path):
    """Repeat runs and stagewise runs are byte-identical."""
    with Stopwatch(120.0) as watch:
        scene = tmp_path / "scene"
        assert cli_main(
            ["synth", "--seed", "1", "--out", str(scene), "--hidden", "o3_like"]
        ) == 0
        common = [
            "--input", str(scene / "intensities.csv"),
            "--i0", str(scene / "lamp.csv"),
            "--references", str(scene / "references.csv"),
            "--library", str(scene / "hidden_o3_like.csv"),
            "--d-range", "1:5",
        ]
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert cli_main(["run", *common, "--out", str(out1)]) == 0
        assert cli_main(["run", *common, "--out", str(out2)]) == 0
        names = sorted(os.listdir(out1))
        assert names == sorted(os.listdir(out2))
        for name in names:
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name

        stages = tmp_path / "stages"
        assert cli_main(
            [
                "emd",
                "--input", str(scene / "intensities.csv"),
                "--i0", str(scene / "lamp.csv"),
                "--out", str(stages),
            ]
        ) == 0
        assert cli_main(
            [
                "fit",
                "--input", str(stages / "xhat.csv"),
                "--references", str(scene / "references.csv"),
                "--out", str(stages),
            ]
        ) == 0
        assert cli_main(
            [
                "ica",
                "--input", str(stages / "residuals.csv"),
                "--library", str(scene / "hidden_o3_like.csv"),
                "--out", str(stages),
                "--d-range", "1:5",
            ]
        ) == 0
        shared = [n for n in names if n != "report.txt"]
        for name in shared:
            assert filecmp.cmp(out1 / name, stages / name, shallow=False), name
    report(
        9,
        f"{len(names)} artifacts byte-identical across reruns and stage composition",
        watch,
    )
