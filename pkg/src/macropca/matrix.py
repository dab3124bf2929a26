"""Incomplete-matrix container, CSV ingestion/emission, robust standardization.

The :class:`IncompleteMatrix` is the universal input of the package: an
(n, d) float array plus an explicit observation mask.  Values at masked
cells are stored as NaN and never read.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CsvParseError
from .univariate import rob_loc_scale_many

DEFAULT_NA_TOKENS = ("NA", "")


@dataclass(frozen=True)
class IncompleteMatrix:
    """A numeric matrix with an explicit missingness mask.

    ``values`` is (n, d) float64 with NaN at unobserved cells; ``mask``
    is boolean with True meaning observed.  Instances are immutable and
    safe to share.
    """

    values: np.ndarray
    mask: np.ndarray
    row_names: tuple[str, ...] | None = None
    col_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, order="F")
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("IncompleteMatrix requires a 2-d array with n,d >= 1")
        if self.mask is None:
            mask = np.isfinite(values)
        else:
            mask = np.array(self.mask, dtype=bool, order="F")
        if mask.shape != values.shape:
            raise ValueError("mask and values must have identical dimensions")
        if not np.isfinite(values[mask]).all():
            raise ValueError("observed cells must hold finite values")
        values = values.copy(order="F")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        for attr in ("row_names", "col_names"):
            names = getattr(self, attr)
            if names is not None:
                names = tuple(str(s) for s in names)
                expected = values.shape[0] if attr == "row_names" else values.shape[1]
                if len(names) != expected:
                    raise ValueError(f"{attr} has wrong length")
                object.__setattr__(self, attr, names)

    @classmethod
    def from_values(cls, values, row_names=None, col_names=None) -> "IncompleteMatrix":
        """Build from an array where NaN marks the missing cells."""
        values = np.asarray(values, dtype=float)
        return cls(values, np.isfinite(values), row_names, col_names)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def n_missing(self) -> int:
        return int((~self.mask).sum())

    def column_labels(self) -> tuple[str, ...]:
        if self.col_names is not None:
            return self.col_names
        return tuple(f"V{j + 1}" for j in range(self.shape[1]))

    def row_labels(self) -> tuple[str, ...]:
        if self.row_names is not None:
            return self.row_names
        return tuple(str(i + 1) for i in range(self.shape[0]))


@dataclass(frozen=True)
class ColumnStandardization:
    """Per-column robust locations/scales plus the degenerate column set.

    Columns whose robust scale is zero are carried through with scale 1
    (centered only) and listed in ``degenerate_cols``; downstream outlier
    flagging skips them.
    """

    locations: np.ndarray
    scales: np.ndarray
    degenerate_cols: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "locations", np.asarray(self.locations, dtype=float))
        object.__setattr__(self, "scales", np.asarray(self.scales, dtype=float))
        object.__setattr__(self, "degenerate_cols", frozenset(int(j) for j in self.degenerate_cols))


def standardize(X: IncompleteMatrix, estimator=None) -> tuple[IncompleteMatrix, ColumnStandardization]:
    """Robustly standardize each column of ``X`` on its observed cells.

    ``estimator`` maps an (n, d) NaN-padded array to (locations, scales);
    the default is the 1-step M pair from :mod:`macropca.univariate`.
    Zero-scale columns are centered, given scale 1, and recorded as
    degenerate rather than rejected.
    """
    if estimator is None:
        estimator = rob_loc_scale_many
    loc, scale = estimator(X.values)
    loc = np.asarray(loc, dtype=float)
    scale = np.asarray(scale, dtype=float)
    degenerate = frozenset(int(j) for j in np.nonzero(~(scale > 0.0))[0])
    scale = scale.copy()
    for j in degenerate:
        scale[j] = 1.0
    z = (X.values - loc) / scale
    std = ColumnStandardization(loc, scale, degenerate)
    return IncompleteMatrix(z, X.mask, X.row_names, X.col_names), std


def unstandardize(Z: IncompleteMatrix, std: ColumnStandardization) -> IncompleteMatrix:
    """Invert :func:`standardize`; exact on observed cells to ~1e-12."""
    if Z.shape[1] != std.locations.shape[0]:
        raise ValueError("unstandardize: dimension mismatch")
    x = Z.values * std.scales + std.locations
    return IncompleteMatrix(x, Z.mask, Z.row_names, Z.col_names)


def unstandardize_values(z: np.ndarray, std: ColumnStandardization) -> np.ndarray:
    """Apply the inverse transform to a plain array (no mask handling)."""
    return np.asarray(z, dtype=float) * std.scales + std.locations


def read_csv(path, na_tokens=DEFAULT_NA_TOKENS, row_labels: bool = False) -> IncompleteMatrix:
    """Read a numeric CSV (RFC 4180, UTF-8, header row) into a matrix.

    Cells matching one of ``na_tokens`` (case-sensitive; default
    {"NA", ""}) become missing.  With ``row_labels`` the first column is
    taken as row names.  Raises CsvParseError on non-numeric tokens,
    ragged rows, or an empty file, reporting the offending cell.
    """
    na = set(na_tokens)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _read_csv_stream(fh, na, row_labels, str(path))


def read_csv_text(text: str, na_tokens=DEFAULT_NA_TOKENS, row_labels: bool = False) -> IncompleteMatrix:
    """Like :func:`read_csv` but from an in-memory string."""
    return _read_csv_stream(io.StringIO(text), set(na_tokens), row_labels, "<string>")


def _read_csv_stream(fh, na, row_labels, source):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError(f"{source}: empty file") from None
    if row_labels:
        col_names = [h.strip() for h in header[1:]]
    else:
        col_names = [h.strip() for h in header]
    if len(col_names) == 0:
        raise CsvParseError(f"{source}: header has no data columns")

    rows, names, mask_rows = [], [], []
    width = len(header)
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue  # blank line
        if len(rec) != width:
            raise CsvParseError(
                f"{source}: row {lineno} has {len(rec)} fields, expected {width}"
            )
        if row_labels:
            names.append(rec[0])
            rec = rec[1:]
        vals = np.empty(len(rec))
        obs = np.empty(len(rec), dtype=bool)
        for j, tok in enumerate(rec):
            t = tok.strip()
            if t in na or tok in na:
                vals[j] = np.nan
                obs[j] = False
                continue
            try:
                v = float(t)
            except ValueError:
                raise CsvParseError(
                    f"{source}: row {lineno}, column {j + 1}: cannot parse {tok!r}"
                ) from None
            if not np.isfinite(v):
                raise CsvParseError(
                    f"{source}: row {lineno}, column {j + 1}: non-finite value {tok!r}"
                )
            vals[j] = v
            obs[j] = True
        rows.append(vals)
        mask_rows.append(obs)
    if not rows:
        raise CsvParseError(f"{source}: no data rows")
    values = np.vstack(rows)
    mask = np.vstack(mask_rows)
    return IncompleteMatrix(values, mask, tuple(names) if row_labels else None, tuple(col_names))


def write_csv(X: IncompleteMatrix, path, na_token: str = "NA") -> None:
    """Write a matrix as CSV with 15-significant-digit numbers.

    Row names are emitted as a leading column when present; masked cells
    become ``na_token``.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        cols = list(X.column_labels())
        has_names = X.row_names is not None
        writer.writerow((["row"] + cols) if has_names else cols)
        for i in range(X.shape[0]):
            rec = []
            if has_names:
                rec.append(X.row_names[i])
            for j in range(X.shape[1]):
                rec.append(format(X.values[i, j], ".15g") if X.mask[i, j] else na_token)
            writer.writerow(rec)
