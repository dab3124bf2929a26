"""Cellwise outlier detection: flagging, imputation, prediction reuse."""

import numpy as np
import pytest

from macropca.ddc import DdcParams, ddc_fit, ddc_predict
from macropca.errors import DimensionError, NumericError
from macropca.matrix import IncompleteMatrix


def bivariate_with_planted_cell(n=200, rho=0.9, seed=0):
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, rho], [rho, 1.0]])
    X = rng.multivariate_normal([0.0, 0.0], cov, size=n)
    truth = X[5, 1]
    X[5, 1] = 10.0
    return IncompleteMatrix.from_values(X), truth


class TestDdcFit:
    def test_planted_cell_flagged_and_imputed(self):
        m, truth = bivariate_with_planted_cell()
        res = ddc_fit(m)
        assert res.cell_flags[5, 1]
        scale = res.model.residual_scales[1] * res.std.scales[1]
        assert abs(res.X_full_imputed[5, 1] - truth) < 3 * max(scale, 0.3)

    def test_standalone_outlier_imputed_to_location(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))  # independent columns: all standalone
        X[:, 2] = rng.normal(size=100) * 0.5 + 4.0
        X[7, 2] = 4.0 + 0.5 * 8.0
        m = IncompleteMatrix.from_values(X)
        res = ddc_fit(m)
        assert res.cell_flags[7, 2]
        assert res.X_full_imputed[7, 2] == res.std.locations[2]

    def test_standalone_connected_set_and_prediction(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(80, 4))
        res = ddc_fit(IncompleteMatrix.from_values(X))
        for j, cset in enumerate(res.connected_sets):
            assert list(cset) == [j]
        # a standalone column predicts each cell by its own cleaned value,
        # and the deshrinkage slope fitted on those identical pairs is 1
        assert np.array_equal(res.model.deshrink, np.ones(4))
        keep = np.isfinite(res.U)
        assert np.array_equal(res.Zhat[keep], res.U[keep])

    def test_nothing_to_impute(self):
        rng = np.random.default_rng(3)
        X = np.clip(rng.normal(size=(60, 3)), -2.0, 2.0)
        m = IncompleteMatrix.from_values(X)
        res = ddc_fit(m)
        unflagged = ~res.cell_flags
        assert np.allclose(res.X_full_imputed[unflagged],
                           np.where(m.mask, X, res.X_full_imputed)[unflagged])

    def test_zhat_has_no_nans(self):
        rng = np.random.default_rng(4)
        X = rng.multivariate_normal(np.zeros(3), np.eye(3) * 0.5 + 0.5, size=50)
        X[rng.random((50, 3)) < 0.3] = np.nan
        res = ddc_fit(IncompleteMatrix.from_values(X))
        assert np.isfinite(res.Zhat).all()
        assert np.isfinite(res.X_na_imputed).all()
        assert np.isfinite(res.X_full_imputed).all()

    def test_flags_require_observed_cells(self):
        rng = np.random.default_rng(5)
        X = rng.multivariate_normal(np.zeros(4), np.eye(4) * 0.4 + 0.6, size=80)
        X[rng.random((80, 4)) < 0.2] = np.nan
        m = IncompleteMatrix.from_values(X)
        res = ddc_fit(m)
        assert not (res.cell_flags & ~m.mask).any()

    def test_column_scale_equivariance_power_of_two(self):
        # multiply a column by 4: exact in floating point, so flags match
        rng = np.random.default_rng(6)
        cov = 0.7 * np.ones((5, 5)) + 0.3 * np.eye(5)
        X = rng.multivariate_normal(np.zeros(5), cov, size=120)
        X[3, 0] = 9.0
        X[rng.random((120, 5)) < 0.05] = np.nan
        Y = X.copy()
        Y[:, 2] = 4.0 * Y[:, 2]
        a = ddc_fit(IncompleteMatrix.from_values(X))
        b = ddc_fit(IncompleteMatrix.from_values(Y))
        assert np.array_equal(a.cell_flags, b.cell_flags)
        assert np.array_equal(a.row_flags, b.row_flags)
        scale = np.ones(5)
        scale[2] = 4.0
        assert np.allclose(b.X_full_imputed, a.X_full_imputed * scale, rtol=1e-10)

    def test_degenerate_input_errors(self):
        with pytest.raises(NumericError):
            ddc_fit(IncompleteMatrix.from_values(np.ones((10, 3))))
        with pytest.raises(NumericError):
            ddc_fit(IncompleteMatrix.from_values(np.random.default_rng(0).normal(size=(2, 3))))
        X = np.random.default_rng(0).normal(size=(10, 3))
        X[:, 1] = np.nan
        with pytest.raises(NumericError):
            ddc_fit(IncompleteMatrix.from_values(X))


class TestDdcPredict:
    def test_training_rows_reproduced_exactly(self):
        rng = np.random.default_rng(7)
        cov = np.array([[1, .8, .6], [.8, 1, .8], [.6, .8, 1.0]])
        X = rng.multivariate_normal(np.zeros(3), cov, size=100)
        X[11, 0] = 8.0
        X[rng.random((100, 3)) < 0.1] = np.nan
        m = IncompleteMatrix.from_values(X)
        fit = ddc_fit(m)
        for i in (0, 5, 11, 40):
            pred = ddc_predict(X[i], fit)
            na = ~m.mask[i]
            assert np.array_equal(pred.x_imputed[na], fit.X_na_imputed[i][na])
            clean = m.mask[i] & ~pred.imputed_cells
            assert np.array_equal(pred.x_imputed[clean], X[i][clean])

    def test_all_na_row(self):
        m, _ = bivariate_with_planted_cell(seed=8)
        fit = ddc_fit(m)
        pred = ddc_predict(np.array([np.nan, np.nan]), fit)
        assert np.isfinite(pred.x_imputed).all()
        assert pred.imputed_cells.all()

    def test_all_na_row_standalone_gets_location(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(80, 3))  # standalone columns
        fit = ddc_fit(IncompleteMatrix.from_values(X))
        pred = ddc_predict(np.full(3, np.nan), fit)
        assert np.array_equal(pred.x_imputed, fit.std.locations)

    def test_corrupted_cell_flagged_and_restored(self):
        rng = np.random.default_rng(10)
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        X = rng.multivariate_normal([0, 0], cov, size=150)
        fit = ddc_fit(IncompleteMatrix.from_values(X))
        row = X[20].copy()
        truth = row[1]
        row[1] = 10.0
        pred = ddc_predict(row, fit)
        assert pred.cell_flags[1]
        assert abs(pred.x_imputed[1] - truth) < 1.5

    def test_dimension_mismatch(self):
        m, _ = bivariate_with_planted_cell(seed=11)
        fit = ddc_fit(m)
        with pytest.raises(DimensionError):
            ddc_predict(np.zeros(5), fit)

    def test_works_from_model_only(self):
        m, _ = bivariate_with_planted_cell(seed=12)
        fit = ddc_fit(m)
        a = ddc_predict(m.values[3], fit)
        b = ddc_predict(m.values[3], fit.model)
        assert np.array_equal(a.x_imputed, b.x_imputed)


class TestDdcParams:
    def test_cutoff_value(self):
        assert DdcParams().cutoff == pytest.approx(2.575829303548901, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            DdcParams(p_cutoff=1.5)
        with pytest.raises(ValueError):
            DdcParams(corr_threshold=-0.1)

    def test_max_predictors_cap(self):
        rng = np.random.default_rng(13)
        cov = 0.8 * np.ones((6, 6)) + 0.2 * np.eye(6)
        X = rng.multivariate_normal(np.zeros(6), cov, size=150)
        res = ddc_fit(IncompleteMatrix.from_values(X), DdcParams(max_predictors=2))
        for j, cset in enumerate(res.connected_sets):
            assert len(cset) <= 3  # the column itself plus at most 2 partners
            assert j in cset
