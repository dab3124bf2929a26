"""Versioned JSON serialization of fitted models.

The file carries everything :func:`macropca.pca.macropca_predict` needs:
center, loadings, eigenvalues, residual scales, cutoffs, the cellwise
coefficients, the fit parameters and the seed.  Serialization is
deterministic: the same model always produces the same bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .ddc import DdcModel, DdcParams
from .matrix import ColumnStandardization
from .pca import MacroPcaParams, PcaModel

SCHEMA_VERSION = 1


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _std_to_dict(std: ColumnStandardization):
    return {
        "locations": _arr(std.locations),
        "scales": _arr(std.scales),
        "degenerate_cols": sorted(std.degenerate_cols),
    }


def _std_from_dict(d):
    return ColumnStandardization(
        np.array(d["locations"], dtype=float),
        np.array(d["scales"], dtype=float),
        frozenset(d["degenerate_cols"]),
    )


def _ddc_to_dict(model: DdcModel):
    d = model.dim
    pairs = []
    for j in range(d):
        for l in np.nonzero(model.weights[j] > 0.0)[0]:
            if l == j:
                continue
            pairs.append([int(j), int(l),
                          float(model.slopes[j, l]), float(model.weights[j, l])])
    return {
        "dim": d,
        "std": _std_to_dict(model.std),
        "predictors": pairs,  # (target, source, slope, weight); diagonal implied
        "deshrink": _arr(model.deshrink),
        "residual_scales": _arr(model.residual_scales),
        "cutoff": float(model.cutoff),
        "params": {
            "p_cutoff": model.params.p_cutoff,
            "corr_threshold": model.params.corr_threshold,
            "max_predictors": model.params.max_predictors,
        },
    }


def _ddc_from_dict(d):
    dim = int(d["dim"])
    W = np.zeros((dim, dim))
    B = np.zeros((dim, dim))
    np.fill_diagonal(W, 1.0)
    np.fill_diagonal(B, 1.0)
    for j, l, b, w in d["predictors"]:
        W[int(j), int(l)] = float(w)
        B[int(j), int(l)] = float(b)
    params = DdcParams(**d["params"])
    return DdcModel(
        std=_std_from_dict(d["std"]), weights=W, slopes=B,
        deshrink=np.array(d["deshrink"], dtype=float),
        residual_scales=np.array(d["residual_scales"], dtype=float),
        cutoff=float(d["cutoff"]), params=params,
    )


def model_to_dict(model: PcaModel) -> dict:
    p = model.params
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "pca-model",
        "method": model.method,
        "k": int(model.k),
        "center": _arr(model.center),
        "loadings": [_arr(row) for row in np.asarray(model.loadings)],
        "eigenvalues": _arr(model.eigenvalues),
        "residual_scales": _arr(model.residual_scales),
        "cutoff_od": float(model.cutoff_od),
        "cutoff_sd": float(model.cutoff_sd),
        "column_std": None if model.column_std is None else _std_to_dict(model.column_std),
        "ddc": None if model.ddc_model is None else _ddc_to_dict(model.ddc_model),
        "params": {
            "alpha": p.alpha, "k": p.k, "k_max": p.k_max,
            "cum_var_target": p.cum_var_target, "n_directions": p.n_directions,
            "max_iter": p.max_iter, "angle_tol": p.angle_tol,
            "scale_columns": p.scale_columns, "seed": p.seed,
        },
    }


def model_from_dict(d: dict) -> PcaModel:
    if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "pca-model":
        raise ValueError("not a recognized model file")
    params = MacroPcaParams(**d["params"])
    return PcaModel(
        center=np.array(d["center"], dtype=float),
        loadings=np.array(d["loadings"], dtype=float),
        eigenvalues=np.array(d["eigenvalues"], dtype=float),
        k=int(d["k"]),
        residual_scales=np.array(d["residual_scales"], dtype=float),
        cutoff_od=float(d["cutoff_od"]),
        cutoff_sd=float(d["cutoff_sd"]),
        column_std=None if d["column_std"] is None else _std_from_dict(d["column_std"]),
        ddc_model=None if d["ddc"] is None else _ddc_from_dict(d["ddc"]),
        params=params,
        method=d["method"],
    )


def save_model(model: PcaModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> PcaModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
