"""Robust PCA toolkit for incomplete data with cellwise and rowwise outliers."""

__version__ = "0.1.0"

from .matrix import (ColumnStandardization, IncompleteMatrix, read_csv,
                     standardize, unstandardize, write_csv)
from .univariate import LocScale, rob_corr, rob_loc_scale, rob_slope, unimcd
from .ddc import DdcModel, DdcParams, DdcResult, ddc_fit, ddc_predict
from .detmcd import McdEstimate, detmcd
from .pca import (MacroPcaParams, MacroPcaResult, PcaModel, icpca_fit,
                  krzanowski_angle, macropca_fit, macropca_predict)
from .diagnostics import (OutlierMapSpec, ResidualMapSpec, outlier_map,
                          render_svg, residual_map, spec_to_csv)
from .simulation import (MseCurve, SimulationConfig, StudySetting,
                         default_eigenvalues, generate_clean, inject_cellwise,
                         inject_missing, inject_rowwise, make_sigma,
                         mse_vs_baseline, preset, run_study)
from .serialize import load_model, save_model

__all__ = [
    "ColumnStandardization", "IncompleteMatrix", "read_csv", "standardize",
    "unstandardize", "write_csv",
    "LocScale", "rob_corr", "rob_loc_scale", "rob_slope", "unimcd",
    "DdcModel", "DdcParams", "DdcResult", "ddc_fit", "ddc_predict",
    "McdEstimate", "detmcd",
    "MacroPcaParams", "MacroPcaResult", "PcaModel", "icpca_fit",
    "krzanowski_angle", "macropca_fit", "macropca_predict",
    "OutlierMapSpec", "ResidualMapSpec", "outlier_map", "render_svg",
    "residual_map", "spec_to_csv",
    "MseCurve", "SimulationConfig", "StudySetting", "default_eigenvalues",
    "generate_clean", "inject_cellwise", "inject_missing", "inject_rowwise",
    "make_sigma", "mse_vs_baseline", "preset", "run_study",
    "load_model", "save_model",
]
