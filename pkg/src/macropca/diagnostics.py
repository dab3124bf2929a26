"""Diagnostic maps: per-cell residual maps, block aggregation, outlier maps.

A residual map classifies each cell as missing, regular, or a positive/
negative outlier with an intensity in [0, 1], and attaches a gray circle
per row coding the orthogonal distance against its cutoff.  Block
aggregation collapses the map to coarse blocks whose color follows the
most frequent outlying category inside.  The outlier map scatters score
distance against orthogonal distance with chi-square based cutoffs
splitting the plane into the four outlier classes.  Both specs render to
deterministic standalone SVG and export as CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

CAT_MISSING = "missing"
CAT_REGULAR = "regular"
CAT_POS = "pos_outlier"
CAT_NEG = "neg_outlier"

QUAD_REGULAR = "regular"
QUAD_GOOD = "good_leverage"
QUAD_ORTH = "orthogonal"
QUAD_BAD = "bad_leverage"

CELL_CUTOFF = float(np.sqrt(stats.chi2.ppf(0.99, 1)))  # 2.576
DEFAULT_R_MAX = 8.0

# color ramps: regular yellow; positive outliers light orange -> red;
# negative outliers light purple -> dark blue; missing white
_YELLOW = (255, 255, 0)
_WHITE = (255, 255, 255)
_POS_LO, _POS_HI = (255, 204, 128), (204, 0, 0)
_NEG_LO, _NEG_HI = (204, 179, 255), (0, 0, 153)


@dataclass(frozen=True)
class ResidualMapSpec:
    """Structured residual map: category and intensity per (blocked) cell."""

    categories: np.ndarray
    intensities: np.ndarray
    row_circles: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    annotations: np.ndarray | None = None
    block: tuple[int, int] | None = None
    na_fraction: np.ndarray | None = None
    r_cutoff: float = CELL_CUTOFF
    r_max: float = DEFAULT_R_MAX

    @property
    def shape(self):
        return self.categories.shape


@dataclass(frozen=True)
class OutlierMapSpec:
    """(sd, od) scatter with cutoffs and quadrant classification."""

    sd: np.ndarray
    od: np.ndarray
    cutoff_sd: float
    cutoff_od: float
    quadrants: np.ndarray
    labels: tuple[tuple[int, str], ...]
    row_labels: tuple[str, ...]


def classify_quadrant(sd, od, cutoff_sd, cutoff_od):
    """Exhaustive, mutually exclusive partition of the (sd, od) plane."""
    sd = np.asarray(sd, dtype=float)
    od = np.asarray(od, dtype=float)
    out = np.full(sd.shape, QUAD_REGULAR, dtype="<U13")
    out[(sd > cutoff_sd) & (od <= cutoff_od)] = QUAD_GOOD
    out[(sd <= cutoff_sd) & (od > cutoff_od)] = QUAD_ORTH
    out[(sd > cutoff_sd) & (od > cutoff_od)] = QUAD_BAD
    return out


def circle_gray(od, cutoff_od):
    """Row circle gray level: 0 up to the cutoff, 1 from 3x the cutoff."""
    od = np.asarray(od, dtype=float)
    if cutoff_od <= 0:
        return np.where(od > 0, 1.0, 0.0)
    return np.clip((od / cutoff_od - 1.0) / 2.0, 0.0, 1.0)


def build_residual_map(residuals, mask, od, cutoff_od, row_labels, col_labels,
                       annotations=None, r_max: float = DEFAULT_R_MAX,
                       r_cutoff: float = CELL_CUTOFF) -> ResidualMapSpec:
    """Residual map spec from raw pieces (used by fits and CLI bundles)."""
    R = np.asarray(residuals, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    cats = np.full(R.shape, CAT_REGULAR, dtype="<U12")
    cats[~mask] = CAT_MISSING
    with np.errstate(invalid="ignore"):
        pos = mask & (R > r_cutoff)
        neg = mask & (R < -r_cutoff)
    cats[pos] = CAT_POS
    cats[neg] = CAT_NEG
    inten = np.zeros(R.shape)
    out = pos | neg
    with np.errstate(invalid="ignore"):
        inten[out] = np.clip((np.abs(R[out]) - r_cutoff) / (r_max - r_cutoff), 0.0, 1.0)
    inten[np.isnan(inten)] = 1.0  # infinite residuals saturate
    return ResidualMapSpec(
        categories=cats, intensities=inten,
        row_circles=circle_gray(od, cutoff_od),
        row_labels=tuple(row_labels), col_labels=tuple(col_labels),
        annotations=None if annotations is None else np.asarray(annotations, dtype=float),
        r_cutoff=r_cutoff, r_max=r_max,
    )


def residual_map(result, block=None, annotate: str = "none",
                 r_max: float = DEFAULT_R_MAX) -> ResidualMapSpec:
    """Residual map of a fit result, optionally block-aggregated.

    ``annotate`` is one of values/residuals/none; original values are
    recovered from the NA-imputed matrix on the observed cells.
    """
    if annotate not in ("values", "residuals", "none"):
        raise ValueError("annotate must be values, residuals or none")
    ann = None
    if annotate == "values":
        ann = np.where(result.mask, result.X_na_imputed, np.nan)
    elif annotate == "residuals":
        ann = np.where(result.mask, result.residuals, np.nan)
    n, d = result.residuals.shape
    rows = result.row_names or tuple(str(i + 1) for i in range(n))
    cols = result.col_names or tuple(f"V{j + 1}" for j in range(d))
    spec = build_residual_map(result.residuals, result.mask, result.od,
                              result.model.cutoff_od, rows, cols,
                              annotations=ann, r_max=r_max,
                              r_cutoff=result.model.cell_cutoff)
    if block is not None:
        spec = block_residual_map(spec, block[0], block[1])
    return spec


def block_residual_map(spec: ResidualMapSpec, rows_per_block: int,
                       cols_per_block: int) -> ResidualMapSpec:
    """Aggregate a cell map into blocks.

    A block takes the most frequent outlying category among its cells
    (regular when none is outlying; ties go to the positive side) with
    intensity the mean intensity of the cells of that category.  The
    fraction of missing cells is kept so regular blocks can be lightened
    toward white.  Aggregation is permutation-invariant within a block.
    """
    n, d = spec.shape
    if rows_per_block < 1 or cols_per_block < 1:
        raise ValueError("block sizes must be >= 1")
    if rows_per_block > n or cols_per_block > d:
        raise ValueError("block size exceeds matrix dimensions")
    nb = (n + rows_per_block - 1) // rows_per_block
    db = (d + cols_per_block - 1) // cols_per_block
    cats = np.full((nb, db), CAT_REGULAR, dtype="<U12")
    inten = np.zeros((nb, db))
    na_frac = np.zeros((nb, db))
    for bi in range(nb):
        rs = slice(bi * rows_per_block, min((bi + 1) * rows_per_block, n))
        for bj in range(db):
            cs = slice(bj * cols_per_block, min((bj + 1) * cols_per_block, d))
            c = spec.categories[rs, cs]
            v = spec.intensities[rs, cs]
            npos = int((c == CAT_POS).sum())
            nneg = int((c == CAT_NEG).sum())
            na_frac[bi, bj] = (c == CAT_MISSING).mean()
            if npos == 0 and nneg == 0:
                continue
            if npos >= nneg:
                cats[bi, bj] = CAT_POS
                inten[bi, bj] = v[c == CAT_POS].mean()
            else:
                cats[bi, bj] = CAT_NEG
                inten[bi, bj] = v[c == CAT_NEG].mean()
    rows = tuple(spec.row_labels[bi * rows_per_block] for bi in range(nb))
    cols = tuple(spec.col_labels[bj * cols_per_block] for bj in range(db))
    circles = np.array([
        spec.row_circles[bi * rows_per_block:
                         min((bi + 1) * rows_per_block, n)].mean()
        for bi in range(nb)
    ])
    return ResidualMapSpec(
        categories=cats, intensities=inten, row_circles=circles,
        row_labels=rows, col_labels=cols, annotations=None,
        block=(rows_per_block, cols_per_block), na_fraction=na_frac,
        r_cutoff=spec.r_cutoff, r_max=spec.r_max,
    )


def outlier_map(result, label_top: int = 3) -> OutlierMapSpec:
    """Outlier map spec of a fit: (sd, od) points, cutoffs, quadrants.

    The ``label_top`` most extreme points (largest od, then sd) carry
    their row names.
    """
    sd = np.asarray(result.sd, dtype=float)
    od = np.asarray(result.od, dtype=float)
    c_sd = float(result.model.cutoff_sd)
    c_od = float(result.model.cutoff_od)
    quadrants = classify_quadrant(sd, od, c_sd, c_od)
    n = sd.shape[0]
    rows = result.row_names or tuple(str(i + 1) for i in range(n))
    order = np.lexsort((-sd, -od))
    labels = tuple((int(i), rows[int(i)]) for i in order[:max(label_top, 0)])
    return OutlierMapSpec(sd=sd, od=od, cutoff_sd=c_sd, cutoff_od=c_od,
                          quadrants=quadrants, labels=labels, row_labels=rows)


def _blend(lo, hi, t):
    return tuple(round(a + (b - a) * t) for a, b in zip(lo, hi))


def _hex(rgb):
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def cell_color(category: str, intensity: float, na_fraction: float = 0.0) -> str:
    """Hex color of a map cell under the fixed ramps."""
    if category == CAT_MISSING:
        return _hex(_WHITE)
    if category == CAT_POS:
        return _hex(_blend(_POS_LO, _POS_HI, float(intensity)))
    if category == CAT_NEG:
        return _hex(_blend(_NEG_LO, _NEG_HI, float(intensity)))
    return _hex(_blend(_YELLOW, _WHITE, float(na_fraction)))


def render_svg(spec, path) -> None:
    """Write a spec as a deterministic standalone SVG file."""
    if isinstance(spec, ResidualMapSpec):
        text = _render_residual_svg(spec)
    elif isinstance(spec, OutlierMapSpec):
        text = _render_outlier_svg(spec)
    else:
        raise TypeError(f"cannot render {type(spec).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _render_residual_svg(spec: ResidualMapSpec) -> str:
    n, d = spec.shape
    cell = 18 if max(n, d) <= 60 else 8
    left = 90
    top = 24
    legend_h = 40
    width = left + d * cell + 3 * cell + 20
    height = top + n * cell + legend_h
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        '<style>text{font-family:sans-serif;}</style>',
    ]
    font = min(cell - 2, 10)
    for i in range(n):
        y = top + i * cell
        out.append(f'<text x="{left - 4}" y="{y + cell * 0.72:.1f}" '
                   f'font-size="{font}" text-anchor="end">{_esc(spec.row_labels[i])}</text>')
        for j in range(d):
            na = 0.0 if spec.na_fraction is None else float(spec.na_fraction[i, j])
            color = cell_color(str(spec.categories[i, j]), float(spec.intensities[i, j]), na)
            out.append(f'<rect class="cell" x="{left + j * cell}" y="{y}" '
                       f'width="{cell}" height="{cell}" fill="{color}" '
                       f'stroke="#999999" stroke-width="0.4"/>')
            if spec.annotations is not None and np.isfinite(spec.annotations[i, j]):
                out.append(f'<text x="{left + j * cell + cell / 2:.1f}" '
                           f'y="{y + cell * 0.72:.1f}" font-size="{max(font - 3, 4)}" '
                           f'text-anchor="middle">{spec.annotations[i, j]:.3g}</text>')
        g = float(spec.row_circles[i])
        lvl = round(255 * (1.0 - g))
        out.append(f'<circle class="odcircle" cx="{left + d * cell + cell:.1f}" '
                   f'cy="{y + cell / 2:.1f}" r="{cell * 0.38:.1f}" '
                   f'fill="{_hex((lvl, lvl, lvl))}" stroke="#000000" stroke-width="0.6"/>')
    ly = top + n * cell + 14
    for name, color, lx in (("regular", _hex(_YELLOW), left),
                            ("high", _hex(_POS_HI), left + 90),
                            ("low", _hex(_NEG_HI), left + 180),
                            ("missing", _hex(_WHITE), left + 270)):
        out.append(f'<rect class="legend" x="{lx}" y="{ly}" width="12" height="12" '
                   f'fill="{color}" stroke="#333333" stroke-width="0.5"/>')
        out.append(f'<text x="{lx + 16}" y="{ly + 10}" font-size="10">{name}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _render_outlier_svg(spec: OutlierMapSpec) -> str:
    w, hgt, pad = 520, 480, 56
    xmax = max(float(np.max(spec.sd, initial=0.0)), spec.cutoff_sd) * 1.08 + 1e-12
    ymax = max(float(np.max(spec.od, initial=0.0)), spec.cutoff_od) * 1.08 + 1e-12

    def sx(v):
        return pad + (v / xmax) * (w - 2 * pad)

    def sy(v):
        return hgt - pad - (v / ymax) * (hgt - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{hgt}" '
        f'viewBox="0 0 {w} {hgt}">',
        '<style>text{font-family:sans-serif;}</style>',
        f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{hgt - 2 * pad}" '
        'fill="none" stroke="#000000" stroke-width="1"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv, yv = frac * xmax, frac * ymax
        out.append(f'<text x="{sx(xv):.2f}" y="{hgt - pad + 16}" font-size="10" '
                   f'text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{pad - 6}" y="{sy(yv) + 3:.2f}" font-size="10" '
                   f'text-anchor="end">{yv:.3g}</text>')
    out.append(f'<line x1="{sx(spec.cutoff_sd):.2f}" y1="{pad}" '
               f'x2="{sx(spec.cutoff_sd):.2f}" y2="{hgt - pad}" '
               'stroke="#cc0000" stroke-width="1" stroke-dasharray="5,4"/>')
    out.append(f'<line x1="{pad}" y1="{sy(spec.cutoff_od):.2f}" '
               f'x2="{w - pad}" y2="{sy(spec.cutoff_od):.2f}" '
               'stroke="#cc0000" stroke-width="1" stroke-dasharray="5,4"/>')
    fill = {QUAD_REGULAR: "#555555", QUAD_GOOD: "#1f77b4",
            QUAD_ORTH: "#ff7f0e", QUAD_BAD: "#cc0000"}
    for i in range(spec.sd.shape[0]):
        out.append(f'<circle class="pt" cx="{sx(spec.sd[i]):.2f}" '
                   f'cy="{sy(spec.od[i]):.2f}" r="3" '
                   f'fill="{fill[str(spec.quadrants[i])]}" fill-opacity="0.8"/>')
    for i, name in spec.labels:
        out.append(f'<text x="{sx(spec.sd[i]) + 5:.2f}" y="{sy(spec.od[i]) - 4:.2f}" '
                   f'font-size="10">{_esc(name)}</text>')
    out.append(f'<text x="{w / 2:.1f}" y="{hgt - 14}" font-size="12" '
               'text-anchor="middle">score distance</text>')
    out.append(f'<text x="16" y="{hgt / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {hgt / 2:.1f})">orthogonal distance</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def spec_to_csv(spec, path) -> None:
    """Export a map spec as CSV for downstream tooling."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(spec, ResidualMapSpec):
            writer.writerow(["row", "col", "row_label", "col_label",
                             "category", "intensity", "row_circle"])
            n, d = spec.shape
            for i in range(n):
                for j in range(d):
                    writer.writerow([
                        i, j, spec.row_labels[i], spec.col_labels[j],
                        spec.categories[i, j], format(spec.intensities[i, j], ".6g"),
                        format(spec.row_circles[i], ".6g"),
                    ])
        elif isinstance(spec, OutlierMapSpec):
            writer.writerow(["row", "row_label", "sd", "od", "quadrant"])
            for i in range(spec.sd.shape[0]):
                writer.writerow([i, spec.row_labels[i], format(spec.sd[i], ".15g"),
                                 format(spec.od[i], ".15g"), spec.quadrants[i]])
        else:
            raise TypeError(f"cannot export {type(spec).__name__}")
