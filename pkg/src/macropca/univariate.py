"""Scalar robust estimators used throughout the package.

All estimators ignore NaN entries, so callers can pass columns of a
partially observed matrix directly.  The batched variants (``*_many``)
operate columnwise on a 2-d array and are the workhorses of the cellwise
outlier stage, where tens of thousands of column pairs are processed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientDataWarning

# Tukey biweight tuning constant (~95% Gaussian efficiency for location).
BIWEIGHT_C = 4.685

# Gaussian consistency factor for the one-step weighted scale below:
# E[w(Z) Z^2] / E[w(Z)] with Z ~ N(0,1) and biweight weights at c=4.685.
_SCALE_GAMMA = 0.8280730033893932

_MAD_TO_SD = 1.4826022185056018  # 1 / norm.ppf(0.75)


@dataclass(frozen=True)
class LocScale:
    """A robust location/scale pair for one variable."""

    location: float
    scale: float


def _biweight_w(t):
    """Tukey biweight weight function, zero outside [-c, c]."""
    u = np.clip(np.abs(t) / BIWEIGHT_C, 0.0, 1.0)
    return (1.0 - u * u) ** 2


def rob_loc_many(a: np.ndarray) -> np.ndarray:
    """Columnwise 1-step M-estimate of location (median start, biweight).

    ``a`` is (n, m) with NaN for missing entries; returns an m-vector.
    Columns with no observed value yield NaN.
    """
    a = np.asarray(a, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        m0 = np.nanmedian(a, axis=0)
        s0 = _MAD_TO_SD * np.nanmedian(np.abs(a - m0), axis=0)
    obs = np.isfinite(a)
    safe_s0 = np.where(s0 > 0.0, s0, 1.0)
    with np.errstate(invalid="ignore"):
        w = _biweight_w((a - m0) / safe_s0)
    w[~obs] = 0.0
    sw = w.sum(axis=0)
    num = np.where(obs, w * np.where(obs, a, 0.0), 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = num / sw
    # zero MAD: the M-step is not defined, keep the median
    return np.where(s0 > 0.0, m1, m0)


def rob_scale_many(r: np.ndarray) -> np.ndarray:
    """Columnwise 1-step M-estimate of scale about 0 (MAD start, biweight).

    ``r`` holds residuals already centered at the relevant location.  A
    column whose MAD is zero gets scale 0.
    """
    r = np.asarray(r, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s0 = _MAD_TO_SD * np.nanmedian(np.abs(r), axis=0)
    obs = np.isfinite(r)
    safe_s0 = np.where(s0 > 0.0, s0, 1.0)
    with np.errstate(invalid="ignore"):
        w = _biweight_w(r / safe_s0)
    w[~obs] = 0.0
    sw = w.sum(axis=0)
    r2 = np.where(obs, r, 0.0) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s1 = np.sqrt((w * r2).sum(axis=0) / (sw * _SCALE_GAMMA))
    return np.where(s0 > 0.0, s1, np.where(np.isnan(s0), np.nan, 0.0))


def rob_loc_scale_many(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Columnwise robust location and scale; see the scalar version."""
    loc = rob_loc_many(a)
    scale = rob_scale_many(np.asarray(a, dtype=float) - loc)
    return loc, scale


def rob_loc_scale(x) -> LocScale:
    """1-step M-estimates of location and scale of a vector with NaNs.

    Location starts from the median, scale from the consistency-scaled
    MAD of the residuals; both take one Tukey-biweight reweighting step.

    Raises ValueError when no value is observed.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not np.isfinite(x).any():
        raise ValueError("rob_loc_scale: no observed values")
    loc, scale = rob_loc_scale_many(x[:, None])
    return LocScale(float(loc[0]), float(scale[0]))


def unimcd_factor(h: int, n: int) -> float:
    """Gaussian consistency factor for the scale of an h-of-n MCD subset."""
    if h >= n:
        return 1.0
    alpha = h / n
    return float(np.sqrt(alpha / stats.chi2.cdf(stats.chi2.ppf(alpha, 1), 3)))


def unimcd_many(a: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Columnwise univariate MCD on an (n, m) array without NaNs.

    For each column, scans the n-h+1 contiguous windows of the sorted
    values, keeps the (leftmost) window with smallest variance, and
    returns its mean and consistency-corrected standard deviation.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if not 1 <= h <= n:
        raise ValueError(f"unimcd: h={h} out of range for n={n}")
    s = np.sort(a, axis=0)
    if h == 1:
        return s[0].copy(), np.zeros(a.shape[1])
    c1 = np.vstack([np.zeros((1, a.shape[1])), np.cumsum(s, axis=0)])
    c2 = np.vstack([np.zeros((1, a.shape[1])), np.cumsum(s * s, axis=0)])
    sums = c1[h:] - c1[:-h]
    sqsums = c2[h:] - c2[:-h]
    ss = sqsums - sums * sums / h  # within-window sum of squares
    best = np.argmin(ss, axis=0)  # leftmost window on ties
    cols = np.arange(a.shape[1])
    loc = sums[best, cols] / h
    var = np.maximum(ss[best, cols], 0.0) / (h - 1)
    return loc, np.sqrt(var) * unimcd_factor(h, n)


def unimcd(x, h: int) -> LocScale:
    """Univariate MCD location/scale from the best h-subset.

    Only observed (non-NaN) values take part; ``h`` counts observed
    values.  Ties between minimal-variance windows go to the leftmost.
    """
    x = np.asarray(x, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if not 1 <= h <= x.size:
        raise ValueError(f"unimcd: h={h} out of range for {x.size} observed values")
    loc, scale = unimcd_many(x[:, None], h)
    return LocScale(float(loc[0]), float(scale[0]))


def _pairwise_complete(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("rob_corr/rob_slope: length mismatch")
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def rob_corr(x, y) -> float:
    """Robust correlation of two vectors, discarding incomplete pairs.

    Standardizes both variables robustly, then applies the
    Gnanadesikan-Kettenring identity
    ``(s(u+v)^2 - s(u-v)^2) / (s(u+v)^2 + s(u-v)^2)`` with the 1-step
    M-scale, clipped to [-1, 1].  Returns 0 (with an
    InsufficientDataWarning) when fewer than 3 complete pairs exist or a
    variable has zero robust scale.
    """
    xp, yp = _pairwise_complete(x, y)
    if xp.size < 3:
        warnings.warn("rob_corr: fewer than 3 complete pairs", InsufficientDataWarning)
        return 0.0
    lx = rob_loc_scale(xp)
    ly = rob_loc_scale(yp)
    if lx.scale <= 0.0 or ly.scale <= 0.0:
        warnings.warn("rob_corr: zero robust scale", InsufficientDataWarning)
        return 0.0
    u = (xp - lx.location) / lx.scale
    v = (yp - ly.location) / ly.scale
    sp = rob_loc_scale(u + v).scale
    sm = rob_loc_scale(u - v).scale
    denom = sp * sp + sm * sm
    if denom <= 0.0:
        warnings.warn("rob_corr: degenerate sums", InsufficientDataWarning)
        return 0.0
    return float(np.clip((sp * sp - sm * sm) / denom, -1.0, 1.0))


def rob_slope(y, x) -> float:
    """Robust slope of the no-intercept regression of y on x.

    Starts from the median of the ratios y/x over pairs whose |x| clears
    a low quantile, then takes one biweight-weighted least-squares step
    on the residuals.  NaN pairs are discarded.  Returns 0 (with an
    InsufficientDataWarning) when all x are zero or no pair is complete.
    """
    yp, xp = _pairwise_complete(y, x)
    ax = np.abs(xp)
    if xp.size == 0 or not (ax > 0.0).any():
        warnings.warn("rob_slope: no usable pairs", InsufficientDataWarning)
        return 0.0
    thresh = np.quantile(ax, 0.2)
    eligible = (ax >= thresh) & (ax > 0.0)
    if not eligible.any():
        eligible = ax > 0.0
    b0 = float(np.median(yp[eligible] / xp[eligible]))
    r = yp - b0 * xp
    s = _MAD_TO_SD * float(np.median(np.abs(r)))
    if s <= 0.0:
        return b0
    w = _biweight_w(r / s)
    denom = float((w * xp * xp).sum())
    if denom <= 0.0:
        return b0
    return float((w * xp * yp).sum() / denom)
