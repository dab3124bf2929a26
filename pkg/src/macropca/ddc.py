"""Cellwise outlier detection and imputation (DetectDeviatingCells).

Fitting standardizes the data robustly, removes univariate outliers,
builds bivariate no-intercept prediction relations between sufficiently
correlated columns, predicts every cell from its connected columns,
flags cells whose standardized residual is large, scores rows, and
produces two imputed matrices: one with only the missing cells filled
and one with the flagged cells filled as well.  The fitted coefficients
are reusable, so a new row can be cleaned without refitting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericError, DimensionError
from .matrix import ColumnStandardization, IncompleteMatrix, standardize, unstandardize_values
from .univariate import rob_loc_many, rob_loc_scale, rob_scale_many, rob_slope


@dataclass(frozen=True)
class DdcParams:
    """Tuning constants for the cellwise stage.

    ``p_cutoff`` sets the flagging cutoff sqrt(chi2_{1,p}); 0.99 gives
    2.576.  Columns are connected when their absolute robust correlation
    reaches ``corr_threshold``.  ``max_predictors`` caps how many
    connected columns may predict a given column (None = no cap).
    """

    p_cutoff: float = 0.99
    corr_threshold: float = 0.5
    max_predictors: int | None = None

    def __post_init__(self):
        if not 0.0 < self.p_cutoff < 1.0:
            raise ValueError("p_cutoff must be in (0,1)")
        if not 0.0 <= self.corr_threshold <= 1.0:
            raise ValueError("corr_threshold must be in [0,1]")

    @property
    def cutoff(self) -> float:
        return float(np.sqrt(stats.chi2.ppf(self.p_cutoff, 1)))


@dataclass(frozen=True)
class DdcModel:
    """The reusable coefficients of a cellwise fit (enough to predict).

    ``weights`` and ``slopes`` are dense (d, d) arrays where entry (j, l)
    is used to predict column j from column l; weight 0 means the pair is
    not connected.  Diagonals are 1.
    """

    std: ColumnStandardization
    weights: np.ndarray
    slopes: np.ndarray
    deshrink: np.ndarray
    residual_scales: np.ndarray
    cutoff: float
    params: DdcParams = field(default_factory=DdcParams)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def connected_set(self, j: int) -> np.ndarray:
        return np.nonzero(self.weights[j] > 0.0)[0]


@dataclass(frozen=True)
class DdcResult:
    """Full output of a cellwise fit.

    Boolean arrays ``cell_flags`` (n, d) and ``row_flags`` (n,) encode
    the flagged index sets; ``X_na_imputed`` fills only the missing
    cells, ``X_full_imputed`` fills the flagged cells too.
    """

    model: DdcModel
    Z: np.ndarray
    U: np.ndarray
    Zhat: np.ndarray
    residuals0: np.ndarray
    cell_flags: np.ndarray
    row_scores: np.ndarray
    row_flags: np.ndarray
    X_na_imputed: np.ndarray
    X_full_imputed: np.ndarray

    @property
    def std(self) -> ColumnStandardization:
        return self.model.std

    @property
    def connected_sets(self) -> list[np.ndarray]:
        return [self.model.connected_set(j) for j in range(self.model.dim)]

    def flagged_cells(self) -> np.ndarray:
        """Flagged cell positions as an (m, 2) array of (row, col)."""
        return np.argwhere(self.cell_flags)


@dataclass(frozen=True)
class DdcPrediction:
    """Cleaning of one new row with a fitted :class:`DdcModel`."""

    x_imputed: np.ndarray
    residuals: np.ndarray
    cell_flags: np.ndarray
    imputed_cells: np.ndarray  # original NAs plus univariate outliers


def _pair_correlations(U, active, threshold, chunk=4096):
    """Robust GK correlations for all pairs of active columns of U.

    Standardizes each member of a pair on their pairwise-complete cells,
    then compares the robust scales of the sum and the difference.
    Returns a dense symmetric (d, d) array with zeros on the diagonal,
    for inactive columns, and below ``threshold`` in absolute value.
    """
    d = U.shape[1]
    corr = np.zeros((d, d))
    idx = [(j, l) for a, j in enumerate(active) for l in active[a + 1:]]
    for start in range(0, len(idx), chunk):
        block = idx[start:start + chunk]
        jj = np.fromiter((p[0] for p in block), int, len(block))
        ll = np.fromiter((p[1] for p in block), int, len(block))
        A = U[:, jj].copy()
        B = U[:, ll].copy()
        both = np.isfinite(A) & np.isfinite(B)
        A[~both] = np.nan
        B[~both] = np.nan
        npairs = both.sum(axis=0)
        la = rob_loc_many(A)
        sa = rob_scale_many(A - la)
        lb = rob_loc_many(B)
        sb = rob_scale_many(B - lb)
        ok = (npairs >= 3) & (sa > 0.0) & (sb > 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            Ua = (A - la) / np.where(sa > 0, sa, 1.0)
            Vb = (B - lb) / np.where(sb > 0, sb, 1.0)
            lp = rob_loc_many(Ua + Vb)
            sp = rob_scale_many(Ua + Vb - lp)
            lm = rob_loc_many(Ua - Vb)
            sm = rob_scale_many(Ua - Vb - lm)
            denom = sp * sp + sm * sm
            r = np.where(denom > 0.0, (sp * sp - sm * sm) / np.where(denom > 0, denom, 1.0), 0.0)
        r = np.clip(np.where(ok, r, 0.0), -1.0, 1.0)
        keep = np.abs(r) >= threshold
        corr[jj[keep], ll[keep]] = r[keep]
        corr[ll[keep], jj[keep]] = r[keep]
    return corr


def _predict_rows(U, WB, W):
    """Weighted bivariate predictions for each row of U.

    Returns (Zhat_raw, genuine): the raw weighted-average prediction per
    cell and a mask of cells where at least one predictor was observed.
    Rows are processed one by one so that a refit-free single-row predict
    reproduces the training predictions bit for bit.
    """
    n, d = U.shape
    zhat = np.zeros((n, d))
    genuine = np.zeros((n, d), dtype=bool)
    for i in range(n):
        zhat[i], genuine[i] = _predict_one(U[i], WB, W)
    return zhat, genuine


def _predict_one(u, WB, W):
    obs = np.isfinite(u)
    u0 = np.where(obs, u, 0.0)
    num = WB @ u0
    den = W @ obs.astype(float)
    genuine = den > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        zhat = np.where(genuine, num / np.where(genuine, den, 1.0), 0.0)
    return zhat, genuine


def ddc_fit(X: IncompleteMatrix, params: DdcParams | None = None) -> DdcResult:
    """Run the cellwise outlier detection pipeline on a data matrix.

    Requires n >= 3 and d >= 2 with no fully missing column.  Raises
    NumericError on degenerate input (e.g. every column constant).
    """
    if params is None:
        params = DdcParams()
    n, d = X.shape
    if n < 3:
        raise NumericError(f"ddc_fit: need at least 3 rows, got {n}")
    if d < 2:
        raise NumericError(f"ddc_fit: need at least 2 columns, got {d}")
    dead = np.nonzero(~X.mask.any(axis=0))[0]
    if dead.size:
        raise NumericError(f"ddc_fit: fully missing columns {dead.tolist()}")

    # step 1: robust columnwise standardization
    Zm, std = standardize(X)
    Z = Zm.values
    degenerate = np.zeros(d, dtype=bool)
    for j in std.degenerate_cols:
        degenerate[j] = True
    if degenerate.all():
        raise NumericError("ddc_fit: all columns are degenerate (zero robust scale)")

    # step 2: univariate cleaning
    cu = params.cutoff
    U = Z.copy()
    wild = np.zeros_like(Z, dtype=bool)
    with np.errstate(invalid="ignore"):
        wild[:, ~degenerate] = np.abs(Z[:, ~degenerate]) > cu
    U[wild] = np.nan

    # step 3: bivariate correlations and slopes between connected columns
    active = [j for j in range(d) if not degenerate[j]]
    corr = _pair_correlations(U, active, params.corr_threshold)
    cap = params.max_predictors if params.max_predictors is not None else d - 1
    W = np.zeros((d, d))
    B = np.zeros((d, d))
    np.fill_diagonal(W, 1.0)
    np.fill_diagonal(B, 1.0)
    for j in range(d):
        partners = np.nonzero(corr[j])[0]
        if partners.size > cap:
            order = np.argsort(-np.abs(corr[j, partners]), kind="stable")
            partners = partners[order[:cap]]
        for l in partners:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                b = rob_slope(U[:, j], U[:, l])
            W[j, l] = abs(corr[j, l])
            B[j, l] = b

    # step 4: weighted predictions, zero where no predictor is available
    WB = W * B
    zhat_raw, genuine = _predict_rows(U, WB, W)

    # step 5: deshrinkage per column, fitted only on genuine predictions
    deshrink = np.ones(d)
    for j in range(d):
        usable = genuine[:, j] & X.mask[:, j]
        if usable.sum() >= 3 and not degenerate[j]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                a = rob_slope(Z[usable, j], zhat_raw[usable, j])
            if a != 0.0:
                deshrink[j] = a
    Zhat = zhat_raw * deshrink

    # step 6: standardized cell residuals and cell flags
    resid = Z - Zhat
    residual_scales = rob_scale_many(np.where(X.mask, resid, np.nan))
    residual_scales = np.where(np.isfinite(residual_scales), residual_scales, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        residuals0 = resid / residual_scales
    residuals0[np.isnan(residuals0) & X.mask] = 0.0  # 0/0: perfect fit
    residuals0[~X.mask] = np.nan
    cell_flags = np.zeros((n, d), dtype=bool)
    with np.errstate(invalid="ignore"):
        cell_flags[:, ~degenerate] = np.abs(residuals0[:, ~degenerate]) > cu
    cell_flags &= X.mask

    # step 7: row scores from the chi-square transform of the residuals
    with np.errstate(invalid="ignore"):
        F = stats.chi2.cdf(residuals0 ** 2, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        T = np.nanmean(F, axis=1)
    row_flags = np.zeros(n, dtype=bool)
    finite_T = np.isfinite(T)
    if finite_T.any():
        ls = rob_loc_scale(np.where(finite_T, T, np.nan))
        if ls.scale > 0.0:
            stdT = (T - ls.location) / ls.scale
            row_flags = finite_T & (stdT ** 2 > cu ** 2)

    # step 8: imputation
    impute_na = ~X.mask
    Zcheck = np.where(impute_na, Zhat, Z)
    Ztilde = np.where(impute_na | cell_flags, Zhat, Z)
    X_na_imputed = unstandardize_values(Zcheck, std)
    X_full_imputed = unstandardize_values(Ztilde, std)

    model = DdcModel(std, W, B, deshrink, residual_scales, cu, params)
    return DdcResult(
        model=model, Z=Z, U=U, Zhat=Zhat, residuals0=residuals0,
        cell_flags=cell_flags, row_scores=T, row_flags=row_flags,
        X_na_imputed=X_na_imputed, X_full_imputed=X_full_imputed,
    )


def ddc_predict(x, fit: DdcModel | DdcResult, params: DdcParams | None = None) -> DdcPrediction:
    """Clean one new row using only the coefficients of a previous fit.

    Standardizes with the training locations/scales, replaces cells
    beyond the univariate cutoff by NA, predicts every NA from the
    stored slopes and weights, deshrinks with the training factors, and
    standardizes the cell residuals with the training residual scales.
    """
    model = fit.model if isinstance(fit, DdcResult) else fit
    cu = params.cutoff if params is not None else model.cutoff
    x = np.asarray(x, dtype=float).ravel()
    d = model.dim
    if x.shape[0] != d:
        raise DimensionError(f"ddc_predict: expected {d} entries, got {x.shape[0]}")
    std = model.std
    obs = np.isfinite(x)
    z = np.where(obs, (x - std.locations) / std.scales, np.nan)

    degenerate = np.zeros(d, dtype=bool)
    for j in std.degenerate_cols:
        degenerate[j] = True
    u = z.copy()
    with np.errstate(invalid="ignore"):
        wild = obs & ~degenerate & (np.abs(z) > cu)
    u[wild] = np.nan

    zhat_raw, _ = _predict_one(u, model.weights * model.slopes, model.weights)
    zhat = zhat_raw * model.deshrink

    imputed_cells = ~np.isfinite(u)
    x_imputed = np.where(imputed_cells, zhat * std.scales + std.locations, x)

    with np.errstate(invalid="ignore", divide="ignore"):
        residuals = (z - zhat) / model.residual_scales
    residuals[np.isnan(residuals) & obs] = 0.0
    residuals[~obs] = np.nan
    with np.errstate(invalid="ignore"):
        cell_flags = obs & ~degenerate & (np.abs(residuals) > cu)
    return DdcPrediction(x_imputed, residuals, cell_flags, imputed_cells)
