"""Deterministic minimum covariance determinant estimator.

Runs six fixed initial scatter estimates (hyperbolic tangent transform,
Spearman rank correlation, normal-scores correlation, spatial-sign
covariance, first-step BACON, raw Gnanadesikan-Kettenring/OGK), refines
each with concentration steps until the determinant stops improving, and
keeps the solution with the smallest determinant.  The raw estimate gets
the usual h/n Gaussian consistency factor and a one-step reweighting at
the 0.975 chi-square quantile.  Intended for the low-dimensional score
matrices of the PCA pipeline (k <= 10 or so).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateDataWarning
from .univariate import rob_scale_many

_MAD_TO_SD = 1.4826022185056018
_DET_TOL = 1e-12
_MAX_CSTEPS = 100

START_METHODS = ("tanh", "spearman", "normal_scores", "spatial_sign", "bacon", "ogk")


@dataclass(frozen=True)
class McdEstimate:
    """Robust multivariate location/scatter with its spectral basis.

    ``support`` holds the h row indices attaining the minimum
    determinant; ``center``/``scatter`` are the reweighted estimates,
    ``raw_center``/``raw_scatter`` the consistency-scaled h-subset ones.
    ``loadings`` and ``eigenvalues`` (descending) come from the spectral
    decomposition of ``scatter``.
    """

    center: np.ndarray
    scatter: np.ndarray
    support: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    raw_center: np.ndarray
    raw_scatter: np.ndarray
    best_start: str
    n_csteps: int
    regularized: bool


def consistency_factor(alpha: float, k: int) -> float:
    """Variance inflation making an alpha-coverage MCD Gaussian-consistent."""
    if alpha >= 1.0:
        return 1.0
    return float(alpha / stats.chi2.cdf(stats.chi2.ppf(alpha, k), k + 2))


def _cov_h(Z, idx):
    sub = Z[idx]
    mu = sub.mean(axis=0)
    diff = sub - mu
    cov = diff.T @ diff / (len(idx) - 1)
    return mu, cov


def _safe_inv_logdet(cov, k, warn=True):
    """Inverse and log-determinant, ridging a rank-deficient matrix."""
    regularized = False
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        eps = 1e-10 * max(np.trace(cov) / k, 1e-300)
        cov = cov + eps * np.eye(k)
        sign, logdet = np.linalg.slogdet(cov)
        regularized = True
        if warn:
            warnings.warn("detmcd: rank-deficient subset, ridged the scatter",
                          DegenerateDataWarning)
    return np.linalg.inv(cov), logdet, cov, regularized


def _mahalanobis2(Z, mu, cov_inv):
    diff = Z - mu
    return np.einsum("ij,jk,ik->i", diff, cov_inv, diff)


def _c_steps(Z, idx0, h):
    """Concentration steps from an initial h-subset to a fixed point.

    The determinant of the subset covariance is non-increasing along the
    way; this is asserted at every step.
    """
    n, k = Z.shape
    idx = np.sort(idx0)
    mu, cov = _cov_h(Z, idx)
    inv, logdet, cov, reg = _safe_inv_logdet(cov, k)
    steps = 0
    for _ in range(_MAX_CSTEPS):
        d2 = _mahalanobis2(Z, mu, inv)
        new_idx = np.sort(np.argpartition(d2, h - 1)[:h])
        mu_new, cov_new = _cov_h(Z, new_idx)
        inv_new, logdet_new, cov_new, reg_new = _safe_inv_logdet(cov_new, k)
        if not (reg or reg_new):
            assert logdet_new <= logdet + 1e-8, "C-step determinant increased"
        reg = reg or reg_new
        steps += 1
        improved = logdet - logdet_new
        mu, cov, inv, idx = mu_new, cov_new, inv_new, new_idx
        if np.array_equal(new_idx, idx0) or improved < _DET_TOL * max(1.0, abs(logdet)):
            logdet = logdet_new
            break
        idx0 = new_idx
        logdet = logdet_new
    return idx, mu, cov, logdet, steps, reg


def _initial_scatters(Z):
    """The six deterministic initial shape estimates, in a fixed order."""
    n, k = Z.shape
    out = {}

    out["tanh"] = np.nan_to_num(np.atleast_2d(np.corrcoef(np.tanh(Z), rowvar=False)), nan=0.0)

    ranks = np.apply_along_axis(stats.rankdata, 0, Z)
    out["spearman"] = np.nan_to_num(np.atleast_2d(np.corrcoef(ranks, rowvar=False)), nan=0.0)

    nscores = stats.norm.ppf((ranks - 1.0 / 3.0) / (n + 1.0 / 3.0))
    out["normal_scores"] = np.nan_to_num(np.atleast_2d(np.corrcoef(nscores, rowvar=False)), nan=0.0)

    norms = np.linalg.norm(Z, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    K = Z / safe[:, None]
    out["spatial_sign"] = K.T @ K / n

    h0 = (n + 1) // 2
    idx = np.argsort(norms, kind="stable")[:h0]
    sub = Z[idx] - Z[idx].mean(axis=0)
    out["bacon"] = sub.T @ sub / max(len(idx) - 1, 1)

    out["ogk"] = _ogk_scatter(Z)

    for name, S in out.items():
        if not np.isfinite(S).all():
            out[name] = np.eye(k)
    return [out[name] for name in START_METHODS]


def _ogk_scatter(Z):
    """Raw OGK shape from pairwise GK covariances with the 1-step M-scale."""
    n, k = Z.shape
    s = rob_scale_many(Z - np.median(Z, axis=0))
    s = np.where(s > 0, s, 1.0)
    Y = Z / s
    U = np.eye(k)
    for j in range(k):
        for l in range(j + 1, k):
            plus = Y[:, [j]] + Y[:, [l]]
            minus = Y[:, [j]] - Y[:, [l]]
            sp = rob_scale_many(plus - np.median(plus, axis=0))[0]
            sm = rob_scale_many(minus - np.median(minus, axis=0))[0]
            U[j, l] = U[l, j] = 0.25 * (sp * sp - sm * sm)
    evals, E = np.linalg.eigh(U)
    V = Y @ E
    lam = rob_scale_many(V - np.median(V, axis=0)) ** 2
    cov = (E * lam) @ E.T
    return (cov * s).T * s  # undo the columnwise scaling


def _refine_start(Z, S):
    """Turn an initial shape into a full location/scatter on Z."""
    n, k = Z.shape
    evals, E = np.linalg.eigh(S)
    V = Z @ E
    lam = rob_scale_many(V - np.median(V, axis=0)) ** 2
    lam = np.where(lam > 0, lam, 1e-12 * max(float(lam.max()), 1.0))
    cov = (E * lam) @ E.T
    sphere = (E / np.sqrt(lam)) @ E.T
    mu = np.median(Z @ sphere, axis=0) @ ((E * np.sqrt(lam)) @ E.T)
    return mu, cov


def detmcd(T: np.ndarray, h: int) -> McdEstimate:
    """Deterministic MCD of an (n, k) matrix with coverage h.

    Requires n > k >= 1 and ceil((n+k+1)/2) <= h <= n.  Ties between
    starts are broken by the fixed start order, so the result is fully
    deterministic.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    n, k = T.shape
    if not (n > k >= 1):
        raise ValueError(f"detmcd: need n > k >= 1, got n={n}, k={k}")
    hmin = max(k + 1, int(np.ceil(n / 2)))
    if not (hmin <= h <= n):
        raise ValueError(f"detmcd: h={h} outside [{hmin}, {n}]")

    # standardize columnwise by median and consistency-scaled MAD
    med = np.median(T, axis=0)
    mad = _MAD_TO_SD * np.median(np.abs(T - med), axis=0)
    mad = np.where(mad > 0, mad, 1.0)
    Z = (T - med) / mad

    best = None
    for name, S in zip(START_METHODS, _initial_scatters(Z)):
        try:
            mu0, cov0 = _refine_start(Z, S)
            inv0, _, _, _ = _safe_inv_logdet(cov0, k, warn=False)
            d2 = _mahalanobis2(Z, mu0, inv0)
            idx0 = np.sort(np.argpartition(d2, h - 1)[:h])
            idx, mu, cov, logdet, steps, reg = _c_steps(Z, idx0, h)
        except np.linalg.LinAlgError:
            continue
        if best is None or logdet < best[3] - 1e-12:
            best = (name, idx, (mu, cov), logdet, steps, reg)
    if best is None:
        raise np.linalg.LinAlgError("detmcd: all starts failed")
    name, idx, (mu_z, cov_z), _, steps, reg = best

    alpha = h / n
    factor = consistency_factor(alpha, k)
    raw_center_z = mu_z
    raw_scatter_z = cov_z * factor

    # one-step reweighting at the 0.975 chi-square quantile
    inv_raw, _, raw_scatter_z, reg2 = _safe_inv_logdet(raw_scatter_z, k, warn=False)
    d2 = _mahalanobis2(Z, raw_center_z, inv_raw)
    keep = d2 <= stats.chi2.ppf(0.975, k)
    if keep.sum() <= k:
        keep = np.zeros(n, dtype=bool)
        keep[idx] = True
    mu_w = Z[keep].mean(axis=0)
    diff = Z[keep] - mu_w
    cov_w = diff.T @ diff / (keep.sum() - 1)
    cov_w = cov_w * consistency_factor(0.975, k)

    # map back to the original coordinates
    center = med + mu_w * mad
    scatter = (cov_w * mad).T * mad
    raw_center = med + raw_center_z * mad
    raw_scatter = (raw_scatter_z * mad).T * mad

    scatter = 0.5 * (scatter + scatter.T)
    evals, vecs = np.linalg.eigh(scatter)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = np.maximum(evals[order], 0.0)
    vecs = vecs[:, order]
    # sign convention: largest |entry| of each loading is positive
    for j in range(k):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]

    return McdEstimate(
        center=center, scatter=scatter, support=idx,
        loadings=vecs, eigenvalues=evals,
        raw_center=raw_center, raw_scatter=raw_scatter,
        best_start=name, n_csteps=steps, regularized=bool(reg or reg2),
    )
