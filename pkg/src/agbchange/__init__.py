"""Model-assisted estimation of forest above-ground biomass change.

Field plots measured at two times give per-plot ΔAGB; optical raster
mosaics supply predictors. A linear ΔAGB model chosen by best-subset BIC
search (with a VIF < 5 screen) is mapped over the forest mask and combined
with plot residuals in a model-assisted estimator of the total.
"""

__version__ = "0.1.0"

from .data_ingest import (
    PlotRecord,
    PlotSpectra,
    RasterStack,
    extract_plot_spectra,
    locate_pixel,
    parse_plot_table,
    read_raster,
    write_raster,
)
from .estimation import (
    EstimateReport,
    be_total,
    confidence_interval,
    estimate,
    ma_total,
    relative_efficiency,
)
from .features import FeatureMatrix, TermSpec, build_design, enumerate_terms, ndi
from .map_prediction import MapStats, predict_map, predict_point, synthetic_mean_for_estimator
from .regression import OlsFit, bic, ols_fit, vif
from .simulation import SimConfig, draw_srs, gen_population, monte_carlo
from .subset_selection import ModelFit, best_subsets_bnb, exhaustive_best_subsets, select_model

__all__ = [name for name in dir() if not name.startswith("_")]
