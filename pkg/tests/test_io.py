import numpy as np
import pytest

from doasep.core import SpectraMatrix, WavelengthGrid
from doasep.errors import GridError, IoError, ParseError
from doasep.io import (
    load_coefficients,
    load_cross_section,
    load_references,
    load_spectra,
    save_coefficients,
    save_references,
    save_spectra,
)


def test_load_three_row_file(tmp_path):
    f = tmp_path / "tiny.csv"
    f.write_text("wavelength_nm,a\n340,1\n340.1,2\n340.2,3\n")
    m = load_spectra(f)
    assert m.grid.pixels == 3
    assert m.grid.start_nm == pytest.approx(340.0)
    assert m.grid.step_nm == pytest.approx(0.1)
    assert m.column_labels == ("a",)
    assert np.allclose(m.values[:, 0], [1, 2, 3])


def test_load_rejects_nonuniform_grid(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("wavelength_nm,a\n340,1\n340.1,2\n340.3,3\n")
    with pytest.raises(GridError):
        load_spectra(f)


def test_load_rejects_non_numeric_cell(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("wavelength_nm,a\n340,1\n340.1,oops\n340.2,3\n")
    with pytest.raises(ParseError) as err:
        load_spectra(f)
    assert "row 3" in str(err.value)


def test_load_rejects_single_row(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("wavelength_nm,a\n340,1\n")
    with pytest.raises(ParseError):
        load_spectra(f)


def test_instrument_sized_file(tmp_path):
    grid = WavelengthGrid(340.0, 0.043, 1024)
    rng = np.random.default_rng(0)
    m = SpectraMatrix(grid, rng.normal(size=(1024, 11)))
    f = tmp_path / "big.csv"
    save_spectra(m, f)
    back = load_spectra(f)
    assert back.grid.pixels == 1024
    assert back.n_columns == 11


def test_roundtrip_values_exact(tmp_path):
    grid = WavelengthGrid(340.0, 0.1, 16)
    rng = np.random.default_rng(42)
    m = SpectraMatrix(grid, rng.normal(size=(16, 3)) * 1e-3, ["x", "y", "z"])
    f = tmp_path / "m.csv"
    save_spectra(m, f)
    back = load_spectra(f)
    scale = np.max(np.abs(m.values))
    assert np.max(np.abs(back.values - m.values)) <= 1e-12 * scale
    assert back.column_labels == ("x", "y", "z")


def test_save_into_missing_directory(tmp_path):
    grid = WavelengthGrid(340.0, 0.1, 4)
    m = SpectraMatrix(grid, np.ones((4, 1)))
    with pytest.raises(IoError):
        save_spectra(m, tmp_path / "no" / "such" / "dir" / "f.csv")


def test_load_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_spectra(tmp_path / "absent.csv")


def test_references_roundtrip(tmp_path):
    from doasep.core import ReferenceSet

    grid = WavelengthGrid(340.0, 0.1, 8)
    rng = np.random.default_rng(1)
    refs = ReferenceSet(grid, rng.normal(size=(8, 2)), ["gas_a", "gas_b"])
    f = tmp_path / "refs.csv"
    save_references(refs, f)
    back = load_references(f)
    assert back.gas_names == ("gas_a", "gas_b")
    assert np.array_equal(back.references, refs.references)


def test_coefficients_roundtrip(tmp_path):
    from doasep.core import CoefficientMatrix

    c = CoefficientMatrix(np.array([[1.5, -2.25], [0.0, 3.75]]), ["g0", "g1"])
    f = tmp_path / "coeffs.csv"
    save_coefficients(c, ["m0", "m1"], f)
    back, labels = load_coefficients(f)
    assert labels == ["m0", "m1"]
    assert back.gas_names == ("g0", "g1")
    assert np.array_equal(back.values, c.values)


def test_cross_section_loader(tmp_path):
    grid = WavelengthGrid(339.0, 0.01, 32)
    m = SpectraMatrix(grid, np.arange(32.0).reshape(-1, 1) * 1e-19, ["sigma"])
    f = tmp_path / "cs.csv"
    save_spectra(m, f)
    cs = load_cross_section(f)
    assert cs.grid.pixels == 32
    assert np.array_equal(cs.sigma, m.values[:, 0])
