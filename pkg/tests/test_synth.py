import numpy as np
import pytest

from doasep.core import CrossSection, WavelengthGrid, delta_slit, log_ratio
from doasep.emd import BandSelection, bandpass_matrix
from doasep.errors import ConfigError
from doasep.robust import irls_fit
from doasep.synth import (
    GasModel,
    SceneConfig,
    alternating_comb,
    demo_scene,
    lamp_spectrum,
    make_truth_bundle,
    simulate_intensity,
)


def two_gas_scene(noise=0.0, seed=0, n=5, known=("gas_a", "gas_b")):
    r = np.linspace(0, 1, n)
    ga = GasModel(
        "gas_a",
        tuple((0.010 / (6e-19 * 5200)) * (0.6 + 0.4 * r)),
        alternating_comb(340.9, 2.05, 6.0e-19),
        known="gas_a" in known,
    )
    gb = GasModel(
        "gas_b",
        tuple((0.010 / (2.4e-19 * 5200)) * (1.0 - 0.5 * r)),
        alternating_comb(341.6, 2.65, 2.4e-19),
        known="gas_b" in known,
    )
    return SceneConfig(
        gases=(ga, gb),
        background=(0.003, -0.0015, 0.002),
        lamp=(1.0, 0.04, -0.05),
        noise_sigma=noise,
        seed=seed,
    )


class TestGasModel:
    def test_validation(self):
        with pytest.raises(ConfigError):
            GasModel("g", (1.0,), peaks=())  # neither peaks nor cross section
        with pytest.raises(ConfigError):
            GasModel("g", (-1.0,), peaks=((350.0, 1.0, 1e-19),))
        with pytest.raises(ConfigError):
            GasModel("g", (1.0,), peaks=((350.0, 0.0, 1e-19),))

    def test_sigma_from_cross_section_table(self):
        fine = WavelengthGrid(339.0, 0.01, 5000)
        sigma = 1e-19 * np.exp(-0.5 * ((fine.wavelengths() - 350.0) / 2.0) ** 2)
        gas = GasModel("g", (1.0e12,), cross_section=CrossSection(fine, sigma))
        target = WavelengthGrid(340.0, 0.043, 400)
        got = gas.sigma_on(target)
        want = 1e-19 * np.exp(-0.5 * ((target.wavelengths() - 350.0) / 2.0) ** 2)
        assert np.max(np.abs(got - want)) <= 1e-24


class TestSimulateIntensity:
    def test_positivity(self):
        scene = demo_scene(seed=5, noise_sigma=5e-3, outlier_rate=0.01, outlier_magnitude=0.1)
        out = simulate_intensity(scene)
        assert np.all(out.values > 0)

    def test_seeded_determinism(self):
        scene = demo_scene(seed=9, noise_sigma=2e-3)
        a = simulate_intensity(scene)
        b = simulate_intensity(demo_scene(seed=9, noise_sigma=2e-3))
        assert np.array_equal(a.values, b.values)

    def test_zero_absorption_gives_lamp(self):
        gas = GasModel("g", (0.0, 0.0), peaks=((350.0, 1.0, 1e-19),))
        scene = SceneConfig(gases=(gas,), background=(0.0,), lamp=(1.0, 0.1), noise_sigma=0.0)
        out = simulate_intensity(scene)
        lamp = scene.lamp_values()
        assert np.max(np.abs(out.values - lamp[:, None])) <= 1e-15

    def test_beer_law_doubling(self):
        base = GasModel("g", (1.0e12, 2.0e12), peaks=((350.0, 1.0, 1e-18),))
        scene = SceneConfig(gases=(base,), background=(0.0,), lamp=(1.0,), noise_sigma=0.0)
        out = simulate_intensity(scene)
        deficit = -np.log(out.values)
        assert np.allclose(deficit[:, 1], 2.0 * deficit[:, 0], atol=1e-12)

    def test_single_pixel_optical_depth(self):
        grid = WavelengthGrid(340.0, 0.043, 64)
        sigma = np.zeros(64)
        sigma[20] = 1e-18
        gas = GasModel("g", (0.01 / (1e-18 * 5200.0),), cross_section=CrossSection(grid, sigma))
        scene = SceneConfig(grid=grid, gases=(gas,), background=(0.0,), lamp=(2.0,), noise_sigma=0.0)
        out = simulate_intensity(scene)
        lamp = scene.lamp_values()
        ratio = np.log(lamp[20] / out.values[20, 0])
        assert ratio == pytest.approx(0.01, abs=1e-12)

    def test_log_affine_in_density(self):
        # ln I is affine in rho*L pixelwise: second difference across
        # scalings vanishes (zero noise, delta slit)
        outs = []
        for scale in (1.0, 2.0, 3.0):
            gas = GasModel("g", (scale * 1.0e12,), peaks=((350.0, 1.5, 3e-19),))
            scene = SceneConfig(gases=(gas,), background=(0.001,), lamp=(1.0,), noise_sigma=0.0)
            outs.append(np.log(simulate_intensity(scene).values[:, 0]))
        second_diff = outs[2] - 2 * outs[1] + outs[0]
        assert np.max(np.abs(second_diff)) <= 1e-12

    def test_slit_preserves_photon_count(self):
        scene = demo_scene(seed=0, noise_sigma=0.0, slit_fwhm_nm=0.25)
        no_slit = SceneConfig(
            gases=scene.gases,
            background=scene.background,
            lamp=scene.lamp,
            slit=delta_slit(),
            noise_sigma=0.0,
            seed=0,
        )
        a = simulate_intensity(scene)
        b = simulate_intensity(no_slit)
        for j in range(a.n_columns):
            assert a.values[:, j].sum() == pytest.approx(
                b.values[:, j].sum(), rel=1e-9
            )

    def test_nonpositive_lamp_rejected(self):
        gas = GasModel("g", (1.0e12,), peaks=((350.0, 1.0, 1e-19),))
        scene = SceneConfig(gases=(gas,), lamp=(0.1, 1.0), noise_sigma=0.0)
        with pytest.raises(ConfigError):
            simulate_intensity(scene)


class TestTruthBundle:
    def test_bookkeeping(self):
        scene = demo_scene(seed=0, hidden_gases=("o3_like",))
        bundle = make_truth_bundle(scene)
        assert bundle.references.n_gases == 2
        assert len(bundle.hidden) == 1
        assert bundle.hidden[0][0] == "o3_like"
        assert bundle.true_coefficients.values.shape == (2, 11)
        assert bundle.true_coefficients.gas_names == ("no2_like", "hono_like")

    def test_truth_is_column_density(self):
        scene = demo_scene(seed=0, hidden_gases=())
        bundle = make_truth_bundle(scene)
        for g, gas in enumerate(scene.gases):
            want = np.array(gas.concentrations) * scene.path_length_cm
            assert np.allclose(bundle.true_coefficients.values[g], want)

    def test_references_are_zero_mean(self):
        bundle = make_truth_bundle(demo_scene(seed=0))
        refs = bundle.references.references
        col_max = np.max(np.abs(refs), axis=0)
        assert np.all(np.abs(refs.mean(axis=0)) <= 1e-10 * col_max)

    def test_no_known_gas_rejected(self):
        scene = demo_scene(seed=0, hidden_gases=("no2_like", "hono_like", "o3_like"))
        with pytest.raises(ConfigError):
            make_truth_bundle(scene)

    def test_noiseless_roundtrip_recovers_coefficients(self):
        # end-to-end oracle: log ratio, band filter, robust fit against the
        # bundle's own references; 2% tolerance absorbs band-filter leakage
        scene = two_gas_scene(noise=0.0)
        bundle = make_truth_bundle(scene)
        x = log_ratio(bundle.intensities, bundle.lamp)
        xhat, _ = bandpass_matrix(x, band=BandSelection(0, 1))
        fit = irls_fit(xhat, bundle.references)
        err = np.abs(fit.coefficients.values - bundle.true_coefficients.values)
        rel = err / bundle.true_coefficients.values
        assert np.max(rel) <= 0.02


class TestSceneConfig:
    def test_mismatched_series_lengths(self):
        ga = GasModel("a", (1.0e12, 2.0e12), peaks=((350.0, 1.0, 1e-19),))
        gb = GasModel("b", (1.0e12,), peaks=((351.0, 1.0, 1e-19),))
        with pytest.raises(ConfigError):
            SceneConfig(gases=(ga, gb))

    def test_lamp_spectrum_shape(self):
        scene = demo_scene(seed=0)
        lamp = lamp_spectrum(scene)
        assert lamp.n_columns == 1
        assert np.all(lamp.values > 0)
