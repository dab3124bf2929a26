"""Incomplete matrix container, CSV round trips, robust standardization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macropca.errors import CsvParseError
from macropca.matrix import (IncompleteMatrix, read_csv, read_csv_text,
                             standardize, unstandardize, write_csv)


def toy(values, mask=None):
    values = np.asarray(values, dtype=float)
    return IncompleteMatrix(values, np.isfinite(values) if mask is None else mask)


class TestIncompleteMatrix:
    def test_mask_from_nan(self):
        m = IncompleteMatrix.from_values([[1.0, np.nan], [2.0, 3.0]])
        assert m.n_missing() == 1
        assert not m.mask[0, 1]

    def test_rejects_nonfinite_observed(self):
        with pytest.raises(ValueError):
            IncompleteMatrix(np.array([[np.inf, 1.0]]), np.array([[True, True]]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            IncompleteMatrix(np.ones((2, 2)), np.ones((2, 3), dtype=bool))

    def test_immutable(self):
        m = toy([[1.0, 2.0]])
        with pytest.raises(ValueError):
            m.values[0, 0] = 9.0

    def test_column_major_storage(self):
        m = toy([[1.0, 2.0], [3.0, 4.0]])
        assert m.values.flags.f_contiguous


class TestCsv:
    def test_na_cells(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1,NA\n2,3\n4,\n")
        m = read_csv(p)
        assert m.shape == (3, 2)
        assert m.n_missing() == 2
        assert m.col_names == ("a", "b")

    def test_custom_na_tokens_case_sensitive(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a\nna\n")
        with pytest.raises(CsvParseError):
            read_csv(p)
        assert read_csv(p, na_tokens=("na",)).n_missing() == 1

    def test_parse_error_reports_position(self):
        with pytest.raises(CsvParseError, match="row 3, column 2"):
            read_csv_text("a,b\n1,2\n3,oops\n")

    def test_ragged_row_rejected(self):
        with pytest.raises(CsvParseError, match="row 2"):
            read_csv_text("a,b\n1\n")

    def test_empty_file_rejected(self):
        with pytest.raises(CsvParseError):
            read_csv_text("")
        with pytest.raises(CsvParseError):
            read_csv_text("a,b\n")

    def test_row_labels(self):
        m = read_csv_text("row,a,b\nfirst,1,2\nsecond,NA,4\n", row_labels=True)
        assert m.row_names == ("first", "second")
        assert m.shape == (2, 2)

    def test_topgear_shaped_missing_fraction(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=(297, 11))
        flat = rng.choice(297 * 11, size=95, replace=False)
        values[np.divmod(flat, 11)] = np.nan
        m = IncompleteMatrix.from_values(values)
        assert m.n_missing() == 95
        assert m.n_missing() / (297 * 11) == pytest.approx(0.029, abs=0.001)

    def test_roundtrip_preserves_values_and_mask(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(size=(12, 5)) * 10.0 ** rng.integers(-8, 8, size=(12, 5))
        values[rng.random((12, 5)) < 0.2] = np.nan
        m = IncompleteMatrix.from_values(values, row_names=[f"r{i}" for i in range(12)])
        p = tmp_path / "rt.csv"
        write_csv(m, p)
        back = read_csv(p, row_labels=True)
        assert np.array_equal(back.mask, m.mask)
        obs = m.mask
        assert np.allclose(back.values[obs], m.values[obs], rtol=1e-14, atol=0.0)
        assert back.row_names == m.row_names

    @given(st.lists(st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")),
                            min_size=1, max_size=8),
                    min_size=2, max_size=5, unique=True))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_quoted_names(self, names, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("csv")
        values = np.arange(len(names), dtype=float)[None, :] + 0.5
        m = IncompleteMatrix(values, np.ones_like(values, dtype=bool),
                             col_names=names)
        p = tmp / "q.csv"
        write_csv(m, p)
        back = read_csv(p)
        assert back.col_names == tuple(n.strip() for n in names)


class TestStandardize:
    def test_symmetric_column(self):
        m = toy([[1.0], [2.0], [3.0]])
        z, std = standardize(m)
        assert std.locations[0] == pytest.approx(2.0)
        assert z.values[1, 0] == pytest.approx(0.0)
        assert z.values[0, 0] == pytest.approx(-z.values[2, 0])

    def test_constant_column_degenerate(self):
        m = toy([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 4.0]])
        z, std = standardize(m)
        assert 0 in std.degenerate_cols
        assert std.scales[0] == 1.0
        assert np.allclose(z.values[:, 0], 0.0)

    def test_mask_preserved(self):
        m = toy([[1.0, np.nan], [2.0, 5.0], [3.0, 6.0]])
        z, _ = standardize(m)
        assert not z.mask[0, 1]
        assert np.isnan(z.values[0, 1])

    def test_roundtrip_identity(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=(10, 4)) * 3 + 7
        values[1, 2] = np.nan
        m = IncompleteMatrix.from_values(values)
        z, std = standardize(m)
        back = unstandardize(z, std)
        obs = m.mask
        assert np.max(np.abs(back.values[obs] - m.values[obs])
                      / np.maximum(np.abs(m.values[obs]), 1.0)) < 1e-12

    def test_identity_standardization(self):
        from macropca.matrix import ColumnStandardization
        m = toy([[1.0, 2.0], [3.0, 4.0]])
        std = ColumnStandardization(np.zeros(2), np.ones(2))
        back = unstandardize(m, std)
        assert np.array_equal(back.values, m.values)

    def test_degenerate_column_roundtrip_by_hand(self):
        # column (5, 5, 5): location 5, scale forced to 1; z = x - 5
        m = toy([[5.0], [5.0], [5.0]])
        z, std = standardize(m)
        assert np.allclose(z.values, 0.0)
        back = unstandardize(z, std)
        assert np.allclose(back.values, 5.0)

    def test_dimension_mismatch(self):
        from macropca.matrix import ColumnStandardization
        m = toy([[1.0, 2.0]])
        with pytest.raises(ValueError):
            unstandardize(m, ColumnStandardization(np.zeros(3), np.ones(3)))
