"""Robust PCA for incomplete, cellwise- and rowwise-contaminated data.

:func:`macropca_fit` chains a cellwise cleaning stage with a rowwise
robust subspace fit: projection-pursuit selection of the least outlying
rows, classical PCA on cell-imputed data, EM-style reimputation until
the subspace stabilizes, an orthogonal-distance reweighting, and a
deterministic MCD re-basing of the scores so that good leverage points
cannot distort the loadings.  :func:`icpca_fit` is the nonrobust
EM-style baseline.  :func:`macropca_predict` scores new rows online
against a fitted model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .ddc import DdcModel, DdcParams, DdcResult, ddc_fit, ddc_predict
from .detmcd import detmcd
from .errors import DegenerateDataWarning, DimensionError, NumericError
from .matrix import ColumnStandardization, IncompleteMatrix
from .univariate import rob_scale_many, unimcd_many

CELL_CUTOFF_P = 0.99


@dataclass(frozen=True)
class MacroPcaParams:
    """Tuning parameters of the robust fit.

    Defaults: coverage alpha=0.5 (h = ceil(alpha*n)), at most k_max=10
    components, rank chosen to reach 80% cumulative explained variance
    when ``k`` is None, 250 projection directions, at most 20 subspace
    iterations stopped at a 0.005 rad angle, no extra column scaling.
    """

    alpha: float = 0.5
    k: int | None = None
    k_max: int = 10
    cum_var_target: float = 0.80
    n_directions: int = 250
    max_iter: int = 20
    angle_tol: float = 0.005
    scale_columns: bool = False
    seed: int = 0
    ddc: DdcParams = field(default_factory=DdcParams)

    def __post_init__(self):
        if not 0.5 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0.5, 1)")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.angle_tol <= 0:
            raise ValueError("angle_tol must be > 0")
        if self.k is not None and self.k > self.k_max:
            raise ValueError(f"requested k={self.k} exceeds k_max={self.k_max}")


@dataclass(frozen=True)
class PcaModel:
    """Serializable PCA fit: everything needed to score new rows.

    ``loadings`` is (d, k) with orthonormal columns, ``eigenvalues``
    descending.  ``cutoff_od`` is the orthogonal-distance cutoff from
    the fit; ``cutoff_sd`` = sqrt(chi2_{k,0.99}).  ``column_std`` holds
    the optional per-column scaling applied before fitting, and
    ``ddc_model`` the cellwise-stage coefficients (None for ICPCA).
    """

    center: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    k: int
    residual_scales: np.ndarray
    cutoff_od: float
    cutoff_sd: float
    column_std: ColumnStandardization | None
    ddc_model: DdcModel | None
    params: MacroPcaParams
    method: str = "macropca"

    @property
    def dim(self) -> int:
        return self.loadings.shape[0]

    @property
    def cell_cutoff(self) -> float:
        if self.ddc_model is not None:
            return self.ddc_model.cutoff
        return float(np.sqrt(stats.chi2.ppf(CELL_CUTOFF_P, 1)))


@dataclass(frozen=True)
class MacroPcaResult:
    """Fit output: model plus all row/cell level diagnostics.

    ``od``/``sd`` are the final orthogonal and score distances of the
    NA-imputed rows; ``reweight_od`` the orthogonal distances of the
    cell-imputed rows that produced ``model.cutoff_od``.  ``row_flags``
    is the complement of ``H_star``; ``cell_flags`` is inherited from
    the cellwise stage.
    """

    model: PcaModel
    scores: np.ndarray
    predictions: np.ndarray
    predictions_imputed: np.ndarray
    residuals: np.ndarray
    od: np.ndarray
    sd: np.ndarray
    X_na_imputed: np.ndarray
    X_cell_imputed: np.ndarray
    H_star: np.ndarray
    row_flags: np.ndarray
    cell_flags: np.ndarray
    iterations_used: int
    final_angle: float
    reweight_od: np.ndarray
    scree_eigenvalues: np.ndarray
    center_unrotated: np.ndarray
    loadings_unrotated: np.ndarray
    orthonorm_err: float
    ddc: DdcResult | None
    mask: np.ndarray
    row_names: tuple[str, ...] | None = None
    col_names: tuple[str, ...] | None = None


@dataclass(frozen=True)
class MacroPcaPrediction:
    """Online scoring of one new row against a fitted model."""

    scores: np.ndarray
    x_imputed: np.ndarray
    residuals: np.ndarray
    od: float
    sd: float
    row_flag: bool
    cell_flags: np.ndarray
    iterations_used: int


def krzanowski_angle(P_new: np.ndarray, P_old: np.ndarray) -> float:
    """Maximal angle (radians) between two orthonormal k-frames' spans.

    Computed as arccos(sqrt(delta_k)) where delta_k is the smallest
    eigenvalue of P_new' P_old P_old' P_new, clipped to [0, 1].
    """
    P_new = np.asarray(P_new, dtype=float)
    P_old = np.asarray(P_old, dtype=float)
    if P_new.ndim == 1:
        P_new = P_new[:, None]
    if P_old.ndim == 1:
        P_old = P_old[:, None]
    for P in (P_new, P_old):
        dev = np.max(np.abs(P.T @ P - np.eye(P.shape[1])))
        if dev > 1e-6:
            raise ValueError("krzanowski_angle: input columns are not orthonormal")
    M = P_new.T @ P_old
    svals = np.linalg.svd(M, compute_uv=False)
    delta = float(np.clip(svals.min() ** 2, 0.0, 1.0))
    return float(np.arccos(np.sqrt(delta)))


def _fix_signs(P):
    """Make each column's largest-magnitude entry positive (in place)."""
    for j in range(P.shape[1]):
        i = int(np.argmax(np.abs(P[:, j])))
        if P[i, j] < 0:
            P[:, j] = -P[:, j]
    return P


def _classical_pca(rows, k=None):
    """Mean, loadings and eigenvalue spectrum of a complete matrix."""
    m = rows.mean(axis=0)
    centered = rows - m
    try:
        _, svals, Vt = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed on a {rows.shape} block: {exc}") from exc
    eig = svals ** 2 / max(rows.shape[0] - 1, 1)
    P = _fix_signs(Vt.T.copy())
    if k is not None:
        P = P[:, :k]
    return m, P, eig


def _orthonorm_err(P):
    return float(np.max(np.abs(P.T @ P - np.eye(P.shape[1]))))


def _sample_directions(X, n_directions, rng):
    """Normalized directions through random pairs of distinct rows.

    Uses every pair when there are fewer than ``n_directions``; resamples
    zero-length or duplicate directions (sign-normalized exact match).
    """
    n = X.shape[0]
    total = n * (n - 1) // 2
    pairs = []
    if total <= n_directions:
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    else:
        seen_pairs = set()
        while len(pairs) < n_directions and len(seen_pairs) < total:
            a, b = rng.choice(n, size=2, replace=False)
            key = (min(a, b), max(a, b))
            if key in seen_pairs:
                continue
            seen_pairs.add(key)
            pairs.append(key)
    dirs = []
    seen = set()
    for a, b in pairs:
        v = X[a] - X[b]
        norm = np.linalg.norm(v)
        if norm <= 1e-12 * (1.0 + np.abs(X[a]).max() + np.abs(X[b]).max()):
            continue
        v = v / norm
        lead = np.nonzero(v)[0][0]
        if v[lead] < 0:
            v = -v
        key = v.tobytes()
        if key in seen:
            continue
        seen.add(key)
        dirs.append(v)
    if not dirs:
        return np.empty((0, X.shape[1]))
    return np.vstack(dirs)


def _outlyingness(X, n_directions, h, rng):
    """Projection-pursuit outlyingness, eq-style max over directions."""
    V = _sample_directions(X, n_directions, rng)
    if V.shape[0] == 0:
        return np.zeros(X.shape[0])
    proj = X @ V.T
    loc, scale = unimcd_many(proj, h)
    keep = scale > 0.0
    if not keep.any():
        return np.zeros(X.shape[0])
    z = np.abs(proj[:, keep] - loc[keep]) / scale[keep]
    return z.max(axis=1)


def _complete_rows(X_obs, impute_mask, center, P, eigenvalues, noise_var):
    """Subspace completion of the masked cells of each row.

    Fills the masked cells of row x with the reconstruction at the
    regularized regression scores of its unmasked cells,
    ``t = (P_o' P_o + noise_var/eigenvalues)^-1 P_o' (x_o - c_o)``.
    This is the converged limit of the project/reconstruct/reimpute
    iteration with shrinkage toward the center, which keeps rows with
    few remaining cells (a near-singular completion) bounded.
    """
    out = np.where(impute_mask, 0.0, X_obs)
    k = P.shape[1]
    ridge = max(noise_var, 1e-10 * float(np.max(eigenvalues)))
    prior = np.diag(ridge / np.asarray(eigenvalues, dtype=float))
    for i in np.nonzero(impute_mask.any(axis=1))[0]:
        o = ~impute_mask[i]
        Po = P[o]
        G = Po.T @ Po + prior
        t = np.linalg.solve(G, Po.T @ (X_obs[i, o] - center[o])) if o.any() else np.zeros(k)
        rec = center + P @ t
        out[i, impute_mask[i]] = rec[impute_mask[i]]
    return out


def _od_cutoff(od, h):
    """Orthogonal-distance cutoff from the 2/3-power Gaussian approximation."""
    t = od ** (2.0 / 3.0)
    loc, scale = unimcd_many(t[:, None], min(h, t.size))
    raw = float(loc[0] + scale[0] * stats.norm.ppf(0.99))
    return max(raw, 0.0) ** 1.5


def _select_k(eigenvalues, params, hard_cap):
    eig = np.maximum(eigenvalues, 0.0)
    rank = int((eig > 1e-12 * max(eig.max(), 1e-300)).sum())
    rank = max(rank, 1)
    cap = min(params.k_max, hard_cap, rank)
    if params.k is not None:
        if params.k > hard_cap:
            raise NumericError(
                f"requested k={params.k} too large for the data (max {hard_cap})")
        if params.k > rank:
            warnings.warn(f"requested k={params.k} exceeds the data rank {rank}; "
                          f"using k={rank}", DegenerateDataWarning)
        return min(params.k, rank)
    total = eig.sum()
    if total <= 0:
        return 1
    cum = np.cumsum(eig) / total
    k = int(np.searchsorted(cum, params.cum_var_target) + 1)
    return max(1, min(k, cap))


def macropca_fit(X: IncompleteMatrix, params: MacroPcaParams | None = None) -> MacroPcaResult:
    """Fit the robust PCA model to an incomplete data matrix.

    Stages: cellwise cleaning; projection pursuit over cell-imputed rows
    to find the h least outlying ones; classical PCA on those rows and
    rank selection; iterative reimputation of missing/outlying cells
    until the subspace angle converges; orthogonal-distance reweighting
    defining the non-outlying set H*; deterministic MCD on the H* scores
    to re-base the subspace; final scores, predictions, standardized
    residuals and outlier distances for all n rows.
    """
    if params is None:
        params = MacroPcaParams()
    n, d = X.shape
    if n < 4 or d < 2:
        raise NumericError(f"macropca_fit: need n >= 4 and d >= 2, got {n}x{d}")
    rng = np.random.default_rng(params.seed)
    h = int(np.ceil(params.alpha * n))
    ortho_errs = []

    # stage 0: optional robust column scaling, then the cellwise stage
    col_std = None
    values = X.values
    if params.scale_columns:
        scales = rob_scale_many(values - np.nanmedian(values, axis=0))
        degenerate = frozenset(int(j) for j in np.nonzero(~(scales > 0))[0])
        scales = np.where(scales > 0, scales, 1.0)
        col_std = ColumnStandardization(np.zeros(d), scales, degenerate)
        X = IncompleteMatrix(values / scales, X.mask, X.row_names, X.col_names)
    ddc = ddc_fit(X, params.ddc)
    Xw = X.values
    mask = X.mask
    Xcheck = ddc.X_na_imputed.copy()
    Xtilde = ddc.X_full_imputed
    cell_flags = ddc.cell_flags
    ddc_row_flags = ddc.row_flags

    # step 1: initial cell-imputed matrix and projection pursuit
    flag_counts = cell_flags.sum(axis=1)
    unflagged = np.nonzero(~ddc_row_flags)[0]
    if unflagged.size == 0:
        warnings.warn("macropca_fit: every row flagged by the cellwise stage",
                      DegenerateDataWarning)
        unflagged = np.arange(n)
    t_scores = np.where(np.isfinite(ddc.row_scores), ddc.row_scores, np.inf)
    order = np.lexsort((unflagged, t_scores[unflagged], flag_counts[unflagged]))
    chosen = unflagged[order[:min(h, unflagged.size)]]
    Xring0 = Xcheck.copy()
    Xring0[chosen] = Xtilde[chosen]

    outl = _outlyingness(Xring0, params.n_directions, h, rng)
    cand = np.argsort(outl, kind="stable")
    cand = cand[~ddc_row_flags[cand]]
    if cand.size == 0:
        cand = np.argsort(outl, kind="stable")
    H0 = np.sort(cand[:min(h, cand.size)])
    if H0.size < 2:
        raise NumericError("macropca_fit: not enough unflagged rows to start")

    # step 2: rank selection on the cell-imputed H0 rows
    Xring = Xcheck.copy()
    Xring[H0] = Xtilde[H0]
    m_cur, P_full, scree = _classical_pca(Xring[H0])
    k = _select_k(scree, params, hard_cap=min(d, H0.size - 1))
    if H0.size < k + 1:
        raise NumericError(f"macropca_fit: h={H0.size} too small for k={k}")
    P_cur = P_full[:, :k]
    ortho_errs.append(_orthonorm_err(P_cur))

    # step 3: iterate reimputation / subspace estimation to convergence
    impute_ring = (~mask) | (cell_flags & np.isin(np.arange(n), H0)[:, None])
    final_angle = np.nan
    iterations = 1
    for s in range(2, max(params.max_iter, 1) + 1):
        T = (Xring - m_cur) @ P_cur
        Xhat = m_cur + T @ P_cur.T
        Xcheck = np.where(mask, Xw, Xhat)
        Xring = np.where(impute_ring, Xhat, Xw)
        m_new, P_new, _ = _classical_pca(Xring[H0], k)
        ortho_errs.append(_orthonorm_err(P_new))
        final_angle = krzanowski_angle(P_new, P_cur)
        m_cur, P_cur = m_new, P_new
        iterations = s
        if final_angle < params.angle_tol:
            break

    # step 4: orthogonal-distance reweighting on the cell-imputed rows
    Xhat_ring = m_cur + ((Xring - m_cur) @ P_cur) @ P_cur.T
    fod = np.linalg.norm(Xring - Xhat_ring, axis=1)
    cutoff_od = _od_cutoff(fod, h)
    od_floor = 1e-10 * max(1.0, float(np.abs(Xring).max()))
    good = fod <= max(cutoff_od, od_floor)
    H_star = np.nonzero(good & ~ddc_row_flags)[0]
    if H_star.size < k + 1:
        warnings.warn("macropca_fit: reweighting kept too few rows; "
                      "falling back to the projection-pursuit subset",
                      DegenerateDataWarning)
        H_star = H0
    Xring_final = Xcheck.copy()
    sel = cell_flags & np.isin(np.arange(n), H_star)[:, None]
    Xring_final[sel] = Xhat_ring[sel]
    m_star, P_star, _ = _classical_pca(Xring_final[H_star], k)
    ortho_errs.append(_orthonorm_err(P_star))

    # step 5: deterministic MCD on the H* scores to re-base the subspace
    T_star = (Xring_final[H_star] - m_star) @ P_star
    n_star = H_star.size
    h_mcd = max(int(np.ceil(params.alpha * n_star)), int(np.ceil((n_star + k + 1) / 2)))
    h_mcd = min(h_mcd, n_star)
    if n_star > k and h_mcd >= int(np.ceil((n_star + k + 1) / 2)):
        mcd = detmcd(T_star, h_mcd)
        center = m_star + P_star @ mcd.center
        P = _fix_signs(P_star @ mcd.loadings)
        eigvals = mcd.eigenvalues.copy()
    else:
        warnings.warn("macropca_fit: too few rows for the MCD step; keeping "
                      "the unrotated basis", DegenerateDataWarning)
        center = m_star.copy()
        P = P_star.copy()
        eigvals = np.var(T_star, axis=0, ddof=1) if n_star > 1 else np.ones(k)
    floor = 1e-12 * max(float(eigvals.max()), 1e-300)
    eigvals = np.maximum(eigvals, floor)
    ortho_errs.append(_orthonorm_err(P))

    # bring the imputations to their fixed point under the final basis, so
    # scoring a training row online reproduces the fit (the predict path
    # iterates toward this same completion)
    noise_var = float(np.mean(scree[k:])) if scree.size > k else 0.0
    Xring_final = _complete_rows(Xw, (~mask) | sel, center, P, eigvals, noise_var)
    Xcheck = np.where(mask, Xw, Xring_final)

    # step 6: final scores, predictions, residuals and distances
    scores = (Xcheck - center) @ P
    predictions = center + scores @ P.T
    D = Xcheck - predictions
    od = np.linalg.norm(D, axis=1)
    # fitted values of the cell-imputed data.  A row whose full observed
    # profile fits the subspace (od within the cutoff, the same test the
    # online predict path applies) keeps its cells: imputing inside such
    # rows would butcher extreme but clean ones.  Rows off the subspace
    # get their flagged cells reimputed from the subspace via the fixed
    # point driven by their clean cells, so outlying cells cannot leak.
    fits_subspace = od <= max(cutoff_od, od_floor)
    impute_pred = (~mask) | (cell_flags & ~fits_subspace[:, None])
    Xpred = _complete_rows(Xw, impute_pred, center, P, eigvals, noise_var)
    predictions_imputed = center + ((Xpred - center) @ P) @ P.T
    residual_scales = rob_scale_many(D)
    residual_scales = np.where(np.isfinite(residual_scales), residual_scales, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = D / residual_scales
    R[np.isnan(R)] = 0.0
    sd = np.sqrt(((scores ** 2) / eigvals).sum(axis=1))
    cutoff_sd = float(np.sqrt(stats.chi2.ppf(0.99, k)))

    row_flags = np.ones(n, dtype=bool)
    row_flags[H_star] = False

    model = PcaModel(
        center=center, loadings=P, eigenvalues=eigvals, k=k,
        residual_scales=residual_scales, cutoff_od=float(cutoff_od),
        cutoff_sd=cutoff_sd, column_std=col_std, ddc_model=ddc.model,
        params=params, method="macropca",
    )
    unscale = col_std.scales if col_std is not None else 1.0
    return MacroPcaResult(
        model=model, scores=scores, predictions=predictions * unscale,
        predictions_imputed=predictions_imputed * unscale,
        residuals=R, od=od, sd=sd,
        X_na_imputed=Xcheck * unscale, X_cell_imputed=Xring_final * unscale,
        H_star=H_star, row_flags=row_flags, cell_flags=cell_flags,
        iterations_used=iterations, final_angle=float(final_angle),
        reweight_od=fod, scree_eigenvalues=scree,
        center_unrotated=m_star, loadings_unrotated=P_star,
        orthonorm_err=float(max(ortho_errs)), ddc=ddc, mask=mask,
        row_names=X.row_names, col_names=X.col_names,
    )


def icpca_fit(X: IncompleteMatrix, k: int | None = None, max_iter: int = 20,
              tol: float = 0.005, k_max: int = 10,
              cum_var_target: float = 0.80, alpha: float = 0.5) -> MacroPcaResult:
    """EM-style classical PCA with mean-start imputation of missing cells.

    Missing cells start at the column means; each pass refits a classical
    PCA and reimputes them from the reconstruction, until the subspace
    angle drops below ``tol`` or ``max_iter`` passes.  Residuals are
    standardized by the nonrobust standard deviation.  On complete data
    this reduces to a single classical PCA.
    """
    n, d = X.shape
    if n < 2:
        raise NumericError("icpca_fit: need at least 2 rows")
    mask = X.mask
    dead = np.nonzero(~mask.any(axis=0))[0]
    if dead.size:
        raise NumericError(f"icpca_fit: fully missing columns {dead.tolist()}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        col_means = np.nanmean(X.values, axis=0)
    Xcur = np.where(mask, X.values, col_means)

    if k is None:
        _, _, eig0 = _classical_pca(Xcur)
        k = _select_k(eig0, MacroPcaParams(k=None, k_max=k_max, cum_var_target=cum_var_target),
                      hard_cap=min(d, n - 1))
    if k > min(d, n - 1):
        raise NumericError(f"icpca_fit: k={k} too large for {n}x{d} data")

    P_prev = None
    m = Xcur.mean(axis=0)
    eigvals = None
    angle = np.nan
    iterations = 0
    scree = None
    for s in range(1, max(max_iter, 1) + 1):
        m, P, eig = _classical_pca(Xcur, k)
        if scree is None:
            scree = eig
        eigvals = eig[:k]
        Xhat = m + ((Xcur - m) @ P) @ P.T
        Xcur = np.where(mask, X.values, Xhat)
        iterations = s
        if P_prev is not None:
            angle = krzanowski_angle(P, P_prev)
            P_prev = P
            if angle < tol:
                break
        else:
            P_prev = P

    P = P_prev
    scores = (Xcur - m) @ P
    predictions = m + scores @ P.T
    D = Xcur - predictions
    sds = np.std(D, axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = D / sds
    R[np.isnan(R)] = 0.0
    od = np.linalg.norm(D, axis=1)
    eig_floor = np.maximum(eigvals, 1e-12 * max(float(eigvals.max()), 1e-300))
    sd_dist = np.sqrt(((scores ** 2) / eig_floor).sum(axis=1))
    h = int(np.ceil(alpha * n))
    cutoff_od = _od_cutoff(od, h)
    cutoff_sd = float(np.sqrt(stats.chi2.ppf(0.99, k)))
    od_floor = 1e-10 * max(1.0, float(np.abs(Xcur).max()))
    row_flags = od > max(cutoff_od, od_floor)
    cu = float(np.sqrt(stats.chi2.ppf(CELL_CUTOFF_P, 1)))
    cell_flags = mask & (np.abs(R) > cu)

    model = PcaModel(
        center=m, loadings=P, eigenvalues=eig_floor, k=k,
        residual_scales=sds, cutoff_od=float(cutoff_od), cutoff_sd=cutoff_sd,
        column_std=None, ddc_model=None,
        params=MacroPcaParams(alpha=alpha, k=k, k_max=max(k_max, k),
                              max_iter=max_iter, angle_tol=tol),
        method="icpca",
    )
    return MacroPcaResult(
        model=model, scores=scores, predictions=predictions,
        predictions_imputed=predictions, residuals=R,
        od=od, sd=sd_dist, X_na_imputed=Xcur, X_cell_imputed=Xcur,
        H_star=np.nonzero(~row_flags)[0], row_flags=row_flags,
        cell_flags=cell_flags, iterations_used=iterations,
        final_angle=float(angle), reweight_od=od, scree_eigenvalues=scree,
        center_unrotated=m, loadings_unrotated=P,
        orthonorm_err=_orthonorm_err(P), ddc=None, mask=mask,
        row_names=X.row_names, col_names=X.col_names,
    )


def macropca_predict(x, model: PcaModel, max_iter: int = 20,
                     tol: float = 1e-9) -> MacroPcaPrediction:
    """Impute, score and flag one new row using only a fitted model.

    The cellwise stage cleans the row with the training coefficients;
    the cleaned cells and missing values are then reimputed from their
    subspace reconstruction until the imputed values move less than
    ``tol`` or ``max_iter`` is hit.  The row is flagged when its
    orthogonal distance exceeds the training cutoff; cells are flagged
    from the standardized residuals at the training residual scales.
    """
    if model.ddc_model is None:
        raise NumericError("macropca_predict: model has no cellwise stage "
                           "(was it fit with icpca?)")
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != model.dim:
        raise DimensionError(
            f"macropca_predict: expected {model.dim} entries, got {x.shape[0]}")
    xw = x.copy()
    if model.column_std is not None:
        xw = xw / model.column_std.scales
    obs = np.isfinite(xw)

    dp = ddc_predict(xw, model.ddc_model)
    xtilde = dp.x_imputed.copy()
    imputed = dp.imputed_cells
    P, m = model.loadings, model.center

    iterations = 0
    for _ in range(max(max_iter, 1)):
        t = P.T @ (xtilde - m)
        xhat = m + P @ t
        delta = np.abs(xhat[imputed] - xtilde[imputed]).max() if imputed.any() else 0.0
        xtilde[imputed] = xhat[imputed]
        iterations += 1
        if delta < tol:
            break

    xcheck = np.where(obs, xw, xtilde)
    t = P.T @ (xcheck - m)
    xhat = m + P @ t
    diff = xcheck - xhat
    od = float(np.linalg.norm(diff))
    sdist = float(np.sqrt(((t ** 2) / model.eigenvalues).sum()))
    with np.errstate(invalid="ignore", divide="ignore"):
        residuals = diff / model.residual_scales
    residuals[np.isnan(residuals)] = 0.0
    cu = model.cell_cutoff
    with np.errstate(invalid="ignore"):
        cell_flags = obs & (np.abs(residuals) > cu)
    residuals = np.where(obs, residuals, np.nan)

    x_imputed = xtilde
    if model.column_std is not None:
        x_imputed = x_imputed * model.column_std.scales
    return MacroPcaPrediction(
        scores=t, x_imputed=x_imputed, residuals=residuals,
        od=od, sd=sdist, row_flag=bool(od > model.cutoff_od),
        cell_flags=cell_flags, iterations_used=iterations,
    )
