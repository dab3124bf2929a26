"""Synthetic data generators and the MSE benchmark harness.

Clean data are multivariate Gaussian with a structured (A09) or random
(ALYZ-style) correlation matrix whose spectrum is replaced by a target
eigenvalue sequence.  Contamination operators inject missing cells
(MCAR or a value-dependent MAR scheme), cellwise outliers at gamma times
the column's standard deviation, and rowwise outliers drawn along the
(k+1)-th eigenvector.  The study runner fits the available methods over
a gamma or epsilon grid and reports the mean squared deviation of their
predictions from a classical PCA fit to the uncontaminated rows.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataWarning
from .matrix import IncompleteMatrix
from .pca import MacroPcaParams, _classical_pca, icpca_fit, macropca_fit

TOP_EIGENVALUES = (30.0, 25.0, 20.0, 15.0, 10.0, 5.0)
TAIL_START, TAIL_END = 0.098, 0.0015

ALYZ_CONDITION = 100.0  # target condition number of the random correlations
ALYZ_BAND = 1.5         # accepted relative band around the target
ALYZ_MAX_ITER = 200


def default_eigenvalues(d: int) -> np.ndarray:
    """Six dominant eigenvalues plus a linearly decaying tail.

    For d=200 the tail steps from 0.098 down to 0.0015 by 0.0005 and the
    six leading components carry 91.6% of the total variance.
    """
    if d < 8:
        raise ValueError("default eigenvalue sequence needs d >= 8")
    tail = np.linspace(TAIL_START, TAIL_END, d - len(TOP_EIGENVALUES))
    return np.concatenate([TOP_EIGENVALUES, tail])


@dataclass(frozen=True)
class SimulationConfig:
    """One cell of the simulation design.

    ``eigenvalues`` None means the default sequence for ``d``; ``k`` is
    the rank used both for fitting and the clean baseline.
    """

    n: int = 100
    d: int = 200
    family: str = "A09"
    eigenvalues: tuple[float, ...] | None = None
    k: int = 6
    epsilon_missing: float = 0.0
    missing_mechanism: str = "MCAR"
    eps_cell: float = 0.0
    eps_row: float = 0.0
    gamma: float = 0.0
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("epsilon_missing", "eps_cell", "eps_row"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name}={v} outside [0,1)")
        if self.epsilon_missing + self.eps_cell >= 1.0:
            raise ValueError("missing and cellwise fractions jointly infeasible")
        if self.family not in ("A09", "ALYZ"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.missing_mechanism not in ("MCAR", "MAR"):
            raise ValueError(f"unknown mechanism {self.missing_mechanism!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def eigenvalue_array(self) -> np.ndarray:
        if self.eigenvalues is None:
            return default_eigenvalues(self.d)
        arr = np.asarray(self.eigenvalues, dtype=float)
        if arr.size != self.d or (arr <= 0).any() or (np.diff(arr) > 0).any():
            raise ValueError("eigenvalues must be d positive nonincreasing values")
        return arr


def a09_correlation(d: int) -> np.ndarray:
    """Structured correlation with entries (-0.9)^|i-j|."""
    idx = np.arange(d)
    return (-0.9) ** np.abs(idx[:, None] - idx[None, :])


def alyz_correlation(d: int, rng, cond: float = ALYZ_CONDITION) -> np.ndarray:
    """Random correlation matrix with condition number near ``cond``.

    A random orthogonal similarity of a log-uniform eigenvalue matrix is
    rescaled to unit diagonal; the spectrum is repeatedly shifted back to
    the target condition number until the normalized matrix lands in the
    accepted band.
    """
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.sort(cond ** rng.uniform(0.0, 1.0, size=d))
    lam[0], lam[-1] = 1.0, cond
    S = (q * lam) @ q.T
    R = S
    for _ in range(ALYZ_MAX_ITER):
        diag = np.sqrt(np.diag(S))
        R = S / np.outer(diag, diag)
        R = 0.5 * (R + R.T)
        evals, vecs = np.linalg.eigh(R)
        c = evals[-1] / evals[0] if evals[0] > 0 else np.inf
        if np.isfinite(c) and cond / ALYZ_BAND <= c <= cond * ALYZ_BAND:
            return R
        if evals[0] <= 0:
            evals = evals - evals[0] + 1e-8 * evals[-1]
        t = (evals[-1] - cond * evals[0]) / (cond - 1.0)
        S = (vecs * (evals + t)) @ vecs.T
    warnings.warn("alyz_correlation: condition-number band not reached",
                  DegenerateDataWarning)
    return R


def _descending_eigh(S):
    evals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(evals, kind="stable")[::-1]
    evals, vecs = evals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return evals, vecs


def make_sigma(config: SimulationConfig, rng=None) -> np.ndarray:
    """Covariance matrix: correlation family + eigenvalue replacement."""
    if config.family == "A09":
        corr = a09_correlation(config.d)
    else:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        corr = alyz_correlation(config.d, rng)
    _, vecs = _descending_eigh(corr)
    lam = config.eigenvalue_array()
    sigma = (vecs * lam) @ vecs.T
    sigma = 0.5 * (sigma + sigma.T)
    np.linalg.cholesky(sigma)  # positive definiteness is part of the contract
    return sigma


def generate_clean(config: SimulationConfig, rng=None) -> IncompleteMatrix:
    """n rows from N(0, Sigma); fully observed."""
    rng = np.random.default_rng(rng if rng is not None else config.seed)
    sigma = make_sigma(config, rng)
    X = _draw_gaussian(config.n, sigma, rng)
    return IncompleteMatrix.from_values(X)


def _draw_gaussian(n, sigma, rng, shift=None):
    L = np.linalg.cholesky(sigma)
    X = rng.standard_normal((n, sigma.shape[0])) @ L.T
    if shift is not None:
        X = X + shift
    return X


def inject_missing(X: IncompleteMatrix, epsilon: float, mechanism: str = "MCAR",
                   seed=0, u_source: np.ndarray | None = None) -> IncompleteMatrix:
    """Mask floor(epsilon*n*d) cells, MCAR or MAR.

    MAR ranks cells by the sum of the absolute values of their circular
    row neighbors (computed from ``u_source`` when given, so the pattern
    can be driven by the uncontaminated data) and masks the largest;
    ties at the quota boundary go to the lexicographically lowest (i, j).
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon outside [0,1)")
    n, d = X.shape
    m = int(np.floor(epsilon * n * d))
    if m == 0:
        return X
    if mechanism == "MCAR":
        rng = np.random.default_rng(seed)
        flat = rng.choice(n * d, size=m, replace=False)
    elif mechanism == "MAR":
        base = X.values if u_source is None else np.asarray(u_source, dtype=float)
        u = np.abs(np.roll(base, 1, axis=1)) + np.abs(np.roll(base, -1, axis=1))
        ii, jj = np.divmod(np.arange(n * d), d)
        order = np.lexsort((jj, ii, -u.ravel()))
        flat = order[:m]
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    mask = X.mask.copy()
    mask[np.divmod(flat, d)] = False
    rows_gone = ~mask.any(axis=1)
    cols_gone = ~mask.any(axis=0)
    if rows_gone.any() or cols_gone.any():
        warnings.warn("inject_missing: some rows/columns became fully missing",
                      DegenerateDataWarning)
    values = np.where(mask, X.values, np.nan)
    return IncompleteMatrix(values, mask, X.row_names, X.col_names)


def inject_cellwise(X: IncompleteMatrix, eps_cell: float, gamma: float,
                    sigma_diag, seed=0) -> IncompleteMatrix:
    """Replace floor(eps_cell*n*d) observed cells by gamma * sigma_j."""
    if not 0.0 <= eps_cell < 1.0:
        raise ValueError("eps_cell outside [0,1)")
    n, d = X.shape
    m = int(np.floor(eps_cell * n * d))
    if m == 0:
        return X
    observed_flat = np.nonzero(X.mask.ravel())[0]
    if m > observed_flat.size:
        raise ValueError("not enough observed cells for the requested eps_cell")
    rng = np.random.default_rng(seed)
    flat = rng.choice(observed_flat, size=m, replace=False)
    sd = np.sqrt(np.asarray(sigma_diag, dtype=float))
    values = X.values.copy()
    ii, jj = np.divmod(flat, d)
    values[ii, jj] = gamma * sd[jj]
    return IncompleteMatrix(values, X.mask, X.row_names, X.col_names)


def inject_rowwise(X: IncompleteMatrix, eps_row: float, gamma: float,
                   sigma: np.ndarray, k: int, seed=0,
                   noise: np.ndarray | None = None,
                   rows: np.ndarray | None = None) -> tuple[IncompleteMatrix, np.ndarray]:
    """Replace floor(eps_row*n) rows by draws from N(gamma*v_{k+1}, Sigma).

    Returns the contaminated matrix and the sorted index array C of rows
    left untouched.  Replaced rows become fully observed.  ``noise`` and
    ``rows`` allow a caller to pin the random draws so gamma can vary
    while everything else is shared.
    """
    n, d = X.shape
    if k + 1 > d:
        raise ValueError("inject_rowwise: k+1 exceeds the dimension")
    m = int(np.floor(eps_row * n))
    clean = np.arange(n)
    if m == 0:
        return X, clean
    rng = np.random.default_rng(seed)
    if rows is None:
        rows = rng.choice(n, size=m, replace=False)
    rows = np.asarray(rows)
    evals, vecs = _descending_eigh(sigma)
    v = vecs[:, k]
    if noise is None:
        noise = _draw_gaussian(m, sigma, rng)
    values = X.values.copy()
    mask = X.mask.copy()
    values[rows] = gamma * v + noise
    mask[rows] = True
    C = np.setdiff1d(clean, rows)
    return IncompleteMatrix(values, mask, X.row_names, X.col_names), C


def cpca_predictions(values: np.ndarray, k: int) -> np.ndarray:
    """Reconstruction of a complete matrix from its k leading components."""
    m, P, _ = _classical_pca(np.asarray(values, dtype=float), k)
    return m + ((values - m) @ P) @ P.T


def mse_vs_baseline(method_predictions: np.ndarray, baseline_predictions: np.ndarray,
                    C) -> float:
    """Mean squared difference over the clean rows C and all columns."""
    C = np.asarray(C, dtype=int)
    if C.size == 0:
        raise ValueError("mse_vs_baseline: empty clean row set")
    diff = np.asarray(method_predictions)[C] - np.asarray(baseline_predictions)[C]
    return float(np.mean(diff ** 2))


@dataclass(frozen=True)
class SimulatedDataset:
    """One contaminated draw plus everything needed to score it."""

    X: IncompleteMatrix
    X_clean: np.ndarray
    sigma: np.ndarray
    clean_rows: np.ndarray
    baseline_predictions: np.ndarray


class _ReplicationDraws:
    """All randomness of one replication, so gamma/epsilon can vary freely."""

    def __init__(self, config: SimulationConfig, rep: int):
        ss = np.random.SeedSequence((config.seed, rep))
        rng = np.random.default_rng(ss)
        self.sigma = make_sigma(config, rng)
        self.sigma_diag = np.diag(self.sigma).copy()
        self.X_clean = _draw_gaussian(config.n, self.sigma, rng)
        n, d = config.n, config.d
        m_rows = int(np.floor(config.eps_row * n))
        self.rows = rng.choice(n, size=m_rows, replace=False) if m_rows else np.empty(0, int)
        self.row_noise = _draw_gaussian(m_rows, self.sigma, rng) if m_rows else None
        self.cell_perm = rng.permutation(n * d)
        self.mcar_perm = rng.permutation(n * d)
        self.fit_seed = int(ss.generate_state(1)[0] % (2 ** 31))

    def assemble(self, config: SimulationConfig) -> SimulatedDataset:
        n, d = config.n, config.d
        X = IncompleteMatrix.from_values(self.X_clean)
        clean = np.arange(n)
        if config.eps_row > 0:
            X, clean = inject_rowwise(X, config.eps_row, config.gamma, self.sigma,
                                      config.k, rows=self.rows, noise=self.row_noise)
        if config.epsilon_missing > 0:
            m = int(np.floor(config.epsilon_missing * n * d))
            if config.missing_mechanism == "MCAR":
                mask = X.mask.copy()
                mask[np.divmod(self.mcar_perm[:m], d)] = False
                X = IncompleteMatrix(np.where(mask, X.values, np.nan), mask,
                                     X.row_names, X.col_names)
            else:
                X = inject_missing(X, config.epsilon_missing, "MAR",
                                   u_source=self.X_clean)
        if config.eps_cell > 0:
            mcell = int(np.floor(config.eps_cell * n * d))
            obs = X.mask.ravel()[self.cell_perm]
            chosen = self.cell_perm[obs][:mcell]
            if chosen.size < mcell:
                raise ValueError("cellwise contamination infeasible")
            values = X.values.copy()
            ii, jj = np.divmod(chosen, d)
            values[ii, jj] = config.gamma * np.sqrt(self.sigma_diag[jj])
            X = IncompleteMatrix(values, X.mask, X.row_names, X.col_names)
        baseline = np.full((n, d), np.nan)
        baseline[clean] = cpca_predictions(self.X_clean[clean], config.k)
        return SimulatedDataset(X, self.X_clean, self.sigma, clean, baseline)


def _fit_predictions(method: str, dataset: SimulatedDataset, config: SimulationConfig,
                     fit_seed: int) -> np.ndarray:
    if method == "macropca":
        params = MacroPcaParams(k=config.k, seed=fit_seed)
        return macropca_fit(dataset.X, params).predictions_imputed
    if method == "icpca":
        return icpca_fit(dataset.X, k=config.k).predictions
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class MseCurve:
    """Mean and standard error of the MSE per method along a grid."""

    setting: str
    grid_name: str
    grid: tuple[float, ...]
    mean_mse: dict[str, np.ndarray]
    se_mse: dict[str, np.ndarray]
    replications: int


@dataclass(frozen=True)
class StudySetting:
    """A named base configuration plus the swept parameter grid."""

    name: str
    base: SimulationConfig
    grid_name: str  # "gamma" or "epsilon"
    grid: tuple[float, ...]

    def config_at(self, value: float) -> SimulationConfig:
        if self.grid_name == "gamma":
            return replace(self.base, gamma=float(value))
        return replace(self.base, epsilon_missing=float(value))


GAMMA_GRID = (0.0, 2.0, 5.0, 10.0, 20.0)
GAMMA_GRID_FAR = (0.0, 5.0, 10.0, 25.0, 50.0)
EPSILON_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)

PRESETS = ("setting1", "setting2", "setting3", "setting4", "dposs_like",
           "mar1", "mar2", "mar3", "mar4")


def preset(name: str, n: int = 100, d: int = 200, k: int = 6, family: str = "A09",
           seed: int = 0, replications: int = 1) -> StudySetting:
    """The study settings: missingness alone or combined with cellwise
    and/or rowwise contamination, in MCAR and MAR variants, plus a
    low-dimensional half-missing configuration."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    mechanism = "MAR" if name.startswith("mar") else "MCAR"
    key = name[-1] if name != "dposs_like" else "dposs"
    base = SimulationConfig(n=n, d=d, k=k, family=family, seed=seed,
                            replications=replications, missing_mechanism=mechanism)
    if key == "1":
        return StudySetting(name, base, "epsilon", EPSILON_GRID)
    if key == "2":
        base = replace(base, epsilon_missing=0.2, eps_cell=0.2)
        return StudySetting(name, base, "gamma", GAMMA_GRID)
    if key == "3":
        base = replace(base, epsilon_missing=0.2, eps_row=0.2)
        return StudySetting(name, base, "gamma", GAMMA_GRID_FAR)
    if key == "4":
        base = replace(base, epsilon_missing=0.2, eps_cell=0.1, eps_row=0.1)
        return StudySetting(name, base, "gamma", GAMMA_GRID)
    base = replace(base, d=21, epsilon_missing=0.5, eps_cell=0.05, eps_row=0.05)
    return StudySetting(name, base, "gamma", GAMMA_GRID)


def run_study(setting: StudySetting, methods=("icpca", "macropca"),
              replications: int | None = None) -> MseCurve:
    """Average the MSE of each method over replications along the grid.

    Each replication draws its randomness once; the grid parameter then
    enters deterministically, so curves are smooth in gamma by
    construction and fully reproducible from the base seed.
    """
    reps = replications if replications is not None else setting.base.replications
    grid = setting.grid
    acc = {m: np.zeros((reps, len(grid))) for m in methods}
    for rep in range(reps):
        draws = _ReplicationDraws(setting.config_at(grid[0]), rep)
        for gi, value in enumerate(grid):
            config = setting.config_at(value)
            dataset = draws.assemble(config)
            for method in methods:
                pred = _fit_predictions(method, dataset, config, draws.fit_seed)
                acc[method][rep, gi] = mse_vs_baseline(
                    pred, dataset.baseline_predictions, dataset.clean_rows)
    mean = {m: acc[m].mean(axis=0) for m in methods}
    se = {m: acc[m].std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1
          else np.zeros(len(grid)) for m in methods}
    return MseCurve(setting.name, setting.grid_name, tuple(float(g) for g in grid),
                    mean, se, reps)


def write_curve_csv(curve: MseCurve, path) -> None:
    """CSV with one line per (grid value, method)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("gamma_or_eps,method,mean_mse,se_mse,reps\n")
        for method in sorted(curve.mean_mse):
            for gi, g in enumerate(curve.grid):
                fh.write(f"{g:.15g},{method},{curve.mean_mse[method][gi]:.15g},"
                         f"{curve.se_mse[method][gi]:.15g},{curve.replications}\n")


def write_manifest(settings: list[StudySetting], replications: int, path) -> None:
    """JSON manifest of the configurations and seeds behind a study."""
    payload = {
        "replications": replications,
        "settings": [
            {
                "name": s.name,
                "grid_name": s.grid_name,
                "grid": list(s.grid),
                "config": {
                    "n": s.base.n, "d": s.base.d, "k": s.base.k,
                    "family": s.base.family,
                    "epsilon_missing": s.base.epsilon_missing,
                    "missing_mechanism": s.base.missing_mechanism,
                    "eps_cell": s.base.eps_cell, "eps_row": s.base.eps_row,
                    "seed": s.base.seed,
                },
            }
            for s in settings
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
